"""Assembly-kernel backend selection.

Imports the compiled Cython kernels when the extension built, otherwise
the pure-numpy twins.  Set ``SONODG_PURE_PYTHON=1`` to force the
fallback (used by the benchmark and the cross-checking tests).
"""

import os

from . import _kernels_py

if os.environ.get("SONODG_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]
    except ImportError:
        _impl = _kernels_py

BACKEND = _impl.BACKEND
# BLAS wins for the mass contraction (a single dgemm), so that one always
# comes from the numpy backend; see benchmarks/bench_kernels.py.
mass_blocks = _kernels_py.mass_blocks
stiffness_blocks = _impl.stiffness_blocks
sip_face_blocks = _impl.sip_face_blocks
upwind_face_blocks = _impl.upwind_face_blocks
face_mass_blocks = _impl.face_mass_blocks
scatter_add = _impl.scatter_add
