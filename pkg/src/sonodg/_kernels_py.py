"""Pure-numpy assembly kernels (fallback backend).

Same contracts as the compiled backend in ``_kernels.pyx``; see
``kernels`` for the selection logic.  Shapes: ne elements, nq quadrature
points, nloc local dofs, nf faces (side 0/1 = left/right).  The
contractions are phrased as batched matmuls so the fallback stays usable
for the long time-stepping studies.
"""

import numpy as np

BACKEND = "python"


def mass_blocks(cw, phi):
    """Element mass blocks: cw (ne, nq) coefficient*weight*detJ, phi (nq, nloc)."""
    nq, nloc = phi.shape
    phiphi = (phi[:, :, None] * phi[:, None, :]).reshape(nq, nloc * nloc)
    return (cw @ phiphi).reshape(-1, nloc, nloc)


def stiffness_blocks(dw, grads):
    """Element stiffness blocks: dw (ne, nq), grads (ne, nq, nloc, 2) physical."""
    ne, nq, nloc, _ = grads.shape
    g = grads.transpose(0, 1, 3, 2).reshape(ne, nq * 2, nloc)
    wg = (grads * dw[:, :, None, None]).transpose(0, 1, 3, 2)
    return g.transpose(0, 2, 1) @ wg.reshape(ne, nq * 2, nloc)


def sip_face_blocks(wq, svals, flux, pen):
    """Interior-face SIP blocks, shape (nf, 2, 2, nloc, nloc).

    svals  (nf, 2, nq, nloc): signed traces  sgn(side) * phi
    flux   (nf, 2, nq, nloc): 0.5 * D * grad(phi) . n per side
    pen    (nf,): sigma*eta / h_F
    Entry [t, s, i, j] couples test dof i on side t with trial dof j on
    side s: -[w]{D grad phi}.n - [phi]{D grad w}.n + pen [phi][w].
    """
    nf, _, nq, nloc = svals.shape
    wsv = svals * wq[:, None, :, None]
    out = np.empty((nf, 2, 2, nloc, nloc))
    for t in range(2):
        wt = wsv[:, t].transpose(0, 2, 1)            # (nf, nloc, nq)
        for s in range(2):
            cons = wt @ flux[:, s]
            symm = (wsv[:, s].transpose(0, 2, 1) @ flux[:, t]) \
                .transpose(0, 2, 1)
            out[:, t, s] = pen[:, None, None] * (wt @ svals[:, s]) \
                - cons - symm
    return out


def upwind_face_blocks(wqvn, svals, upvals):
    """Interior-face upwind blocks, shape (nf, 2, nloc, nloc).

    wqvn (nf, nq) = face weights * (v.n_F); upvals (nf, nq, nloc) is the
    trial trace from the upwind side.  Entry [t, i, j] couples test dof i
    on side t with trial dof j on the upwind side.
    """
    wup = upvals * wqvn[:, :, None]
    return np.stack([svals[:, t].transpose(0, 2, 1) @ wup for t in range(2)],
                    axis=1)


def face_mass_blocks(wq, vals):
    """Single-side boundary face blocks: wq (nf, nq), vals (nf, nq, nloc)."""
    return vals.transpose(0, 2, 1) @ (vals * wq[:, :, None])


def scatter_add(data, pos, vals):
    """data[pos] += vals with duplicate positions accumulated."""
    data += np.bincount(pos.ravel(), weights=vals.ravel(), minlength=data.size)
