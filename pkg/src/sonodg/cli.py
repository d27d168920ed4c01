"""Experiment orchestration: configuration, convergence studies, the
physically parameterized simulation, and CSV/VTK emission.

Config files are flat ``section.key = value`` text; unknown keys are
rejected so misspelled physics parameters cannot silently default.
"""

import argparse
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import forms, mms
from .acoustics import (AcousticParams, AcousticStepper, NewmarkSpec,
                        TripleNormTracker)
from .errors import ConfigurationError, ModelError
from .kernels import BACKEND
from .linalg import SolverSpec
from .mesh import build_rect_mesh, classify_boundary, write_vtk
from .space import DgSpace, FieldVector, interpolate
from .transport import (TransportParams, TransportStepper, bounds_monitor,
                        coupled_step)


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

@dataclass
class SimulationConfig:
    experiment: str = "convergence-pressure"
    # domain / mesh
    x0: float = 0.0
    x1: float = 1.0
    y0: float = 0.0
    y1: float = 2.0
    nx: int = 8
    ny: int = 16
    degree: int = 1
    levels: tuple = (8, 12, 16, 20)   # cells across x per study level
    # time
    t_end: float = 0.5
    dt: float | None = None           # fixed step; None -> dt = c_dt * h^(q+1)
    dt_constant: float = 0.04
    # acoustic medium
    c: float = 1.0
    beta: float = 0.1
    kappa: float = 0.1
    alpha: float | None = None        # None -> alpha = c
    # transport medium
    d0: float = 1.0
    d1: float = 1.0
    abs_pressure: bool = False
    vx: float = 0.0
    vy: float = 1.0
    g_in_value: float | None = None   # constant inflow pulse (simulate)
    # acoustic source of the simulate experiment
    source_amplitude: float = 3.0e11
    source_sigma: float = 2.0e-4
    source_frequency: float = 4.0e5
    source_center_x: float = 0.005
    source_center_y: float = 0.005
    # penalty (None -> policy defaults)
    sigma: float | None = None
    eta: float | None = None
    # solver / integrator
    solver_method: str = "direct"
    solver_rtol: float = 1e-12
    solver_max_iter: int = 2000
    newmark_beta: float = 0.25
    newmark_gamma: float = 0.5
    fp_tol: float = 1e-10
    fp_max_iter: int = 50
    # output
    out_dir: str = "out"
    vtk_every: int = 10
    jobs: int = 1

    def __post_init__(self):
        if self.experiment not in ("convergence-pressure", "convergence-coupled",
                                   "simulate", "selftest"):
            raise ConfigurationError(f"unknown experiment {self.experiment!r}")
        if self.x1 <= self.x0 or self.y1 <= self.y0:
            raise ConfigurationError("degenerate domain")
        if self.dt is not None and self.dt > self.t_end:
            raise ConfigurationError("dt must not exceed t_end")
        if self.degree < 1:
            raise ConfigurationError("degree must be >= 1")

    @property
    def alpha_value(self) -> float:
        return self.c if self.alpha is None else self.alpha

    def acoustic_params(self) -> AcousticParams:
        return AcousticParams(c=self.c, beta=self.beta, kappa=self.kappa,
                              alpha=self.alpha_value)

    def transport_params(self) -> TransportParams:
        return TransportParams(d0=self.d0, d1=self.d1,
                               abs_pressure=self.abs_pressure,
                               v=(self.vx, self.vy))

    def newmark(self) -> NewmarkSpec:
        return NewmarkSpec(beta=self.newmark_beta, gamma=self.newmark_gamma,
                           fp_tol=self.fp_tol, fp_max_iter=self.fp_max_iter)

    def solver(self) -> SolverSpec:
        return SolverSpec(method=self.solver_method, rtol=self.solver_rtol,
                          max_iter=self.solver_max_iter)

    def penalty(self) -> forms.PenaltySpec | None:
        if self.sigma is None and self.eta is None:
            return None
        return forms.PenaltySpec(sigma=self.sigma if self.sigma is not None else 1.0,
                                 eta=self.eta if self.eta is not None else 10.0)

    def level_timestep(self, h: float) -> float:
        if self.dt is not None:
            return self.dt
        return self.dt_constant * h ** (self.degree + 1)

    def echo(self) -> list:
        """Full provenance: every config value as a 'key = value' line."""
        out = [f"kernel_backend = {BACKEND}"]
        for f in fields(self):
            out.append(f"{f.name} = {getattr(self, f.name)!r}")
        return out


_SECTIONS = {
    "experiment": ("experiment", str),
    "domain.x0": ("x0", float), "domain.x1": ("x1", float),
    "domain.y0": ("y0", float), "domain.y1": ("y1", float),
    "mesh.nx": ("nx", int), "mesh.ny": ("ny", int),
    "mesh.degree": ("degree", int),
    "mesh.levels": ("levels", lambda s: tuple(int(v) for v in s.split())),
    "time.t_end": ("t_end", float), "time.dt": ("dt", float),
    "time.dt_constant": ("dt_constant", float),
    "acoustic.c": ("c", float), "acoustic.beta": ("beta", float),
    "acoustic.kappa": ("kappa", float), "acoustic.alpha": ("alpha", float),
    "transport.d0": ("d0", float), "transport.d1": ("d1", float),
    "transport.abs_pressure": ("abs_pressure", lambda s: s.lower() in ("1", "true", "yes")),
    "transport.vx": ("vx", float), "transport.vy": ("vy", float),
    "transport.g_in": ("g_in_value", float),
    "source.amplitude": ("source_amplitude", float),
    "source.sigma": ("source_sigma", float),
    "source.frequency": ("source_frequency", float),
    "source.center_x": ("source_center_x", float),
    "source.center_y": ("source_center_y", float),
    "penalty.sigma": ("sigma", float), "penalty.eta": ("eta", float),
    "solver.method": ("solver_method", str),
    "solver.rtol": ("solver_rtol", float),
    "solver.max_iter": ("solver_max_iter", int),
    "newmark.beta": ("newmark_beta", float),
    "newmark.gamma": ("newmark_gamma", float),
    "newmark.fp_tol": ("fp_tol", float),
    "newmark.fp_max_iter": ("fp_max_iter", int),
    "output.dir": ("out_dir", str),
    "output.vtk_every": ("vtk_every", int),
    "run.jobs": ("jobs", int),
}


def parse_config(text: str, base: SimulationConfig | None = None) -> SimulationConfig:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {lineno}: expected 'key = value'")
        key, val = (part.strip() for part in line.split("=", 1))
        if key not in _SECTIONS:
            raise ConfigurationError(f"line {lineno}: unknown key {key!r}")
        name, conv = _SECTIONS[key]
        try:
            values[name] = conv(val)
        except ValueError as exc:
            raise ConfigurationError(
                f"line {lineno}: bad value for {key!r}: {exc}") from exc
    if base is None:
        return SimulationConfig(**values)
    return replace(base, **values)


def load_config(path) -> SimulationConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))


def simulate_defaults() -> SimulationConfig:
    """The physically parameterized run: centimeter water-like domain,
    microsecond horizon, Gaussian tone burst, enhanced diffusivity."""
    return SimulationConfig(
        experiment="simulate",
        x0=0.0, x1=0.01, y0=0.0, y1=0.01, nx=40, ny=40, degree=1,
        t_end=5e-6, dt=5e-8,
        c=1500.0, beta=1e-6, kappa=1.0, alpha=None,
        d0=5.0, d1=500.0, abs_pressure=True, vx=0.0, vy=1e-3,
        g_in_value=1.0)


# ---------------------------------------------------------------------------
# Reporting
# ---------------------------------------------------------------------------

@dataclass
class RunReport:
    header: list
    diagnostics: dict = field(default_factory=dict)   # name -> list of rows
    eoc_tables: dict = field(default_factory=dict)    # name -> EocTable
    timings: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def write_csv(self, out_dir, name, columns, rows):
        path = Path(out_dir) / f"{name}.csv"
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as fh:
            for line in self.header:
                fh.write(f"# {line}\n")
            fh.write(",".join(columns) + "\n")
            for row in rows:
                fh.write(",".join(_fmt(v) for v in row) + "\n")
        return path

    def write_eoc_csv(self, out_dir, name):
        rows = []
        for err_name, table in self.eoc_tables.items():
            for h, e, r in zip(table.hs, table.errors, table.rates):
                rows.append((h, err_name, e, "" if np.isnan(r) else r))
        return self.write_csv(out_dir, name, ("h", "error_name", "value", "rate"),
                              rows)


def _fmt(v):
    if isinstance(v, float) or isinstance(v, np.floating):
        return repr(float(v))
    return str(v)


# ---------------------------------------------------------------------------
# Convergence studies
# ---------------------------------------------------------------------------

@dataclass
class LevelResult:
    h: float
    n: int
    steps: int
    dt: float
    dg_p: float = np.nan        # max_t |p - p^h|_dG (vs exact)
    l2_pt: float = np.nan       # max_t ||p_t - p_t^h||_L2 (vs exact)
    dg_p_disc: float = np.nan   # max_t |p^h - I_h p|_dG
    l2_pt_disc: float = np.nan  # max_t ||p_t^h - I_h p_t||_L2
    dg_u_int: float = np.nan    # (int_0^T |u - u^h|_dG^2 dt)^(1/2)
    l2_u: float = np.nan        # max_t ||u - u^h||_L2
    max_kappa_p: float = 0.0
    max_fp_iters: int = 0
    rows: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    failure: str | None = None


def _study_setup(config: SimulationConfig, n: int):
    mesh = build_rect_mesh((config.x0, config.x1), (config.y0, config.y1),
                           n, 2 * n)
    classify_boundary(mesh, (config.vx, config.vy))
    space = DgSpace(mesh, config.degree)
    exact = mms.academic_solution()
    apar = config.acoustic_params()
    stepper = AcousticStepper(
        space, apar, newmark=config.newmark(), penalty=config.penalty(),
        f_p=mms.forcing_pressure(exact, apar),
        g_abs=mms.boundary_forcing_pressure(exact, apar),
        solver=config.solver())
    p0 = interpolate(space, lambda x, y: exact.p(x, y, 0.0))
    p1 = interpolate(space, lambda x, y: exact.p_t(x, y, 0.0))
    state = stepper.init_state(p0, p1)
    return mesh, space, exact, stepper, state


def run_pressure_level(config: SimulationConfig, n: int) -> LevelResult:
    mesh, space, exact, stepper, state = _study_setup(config, n)
    h = mesh.mesh_size
    dt_nom = config.level_timestep(h)
    steps = max(1, int(np.ceil(config.t_end / dt_nom - 1e-12)))
    dt = config.t_end / steps
    res = LevelResult(h=h, n=n, steps=steps, dt=dt)
    tracker = TripleNormTracker(space, exact, stepper.params)
    norm_time = 0.0

    def record(state, diag=None):
        nonlocal norm_time
        tic = time.perf_counter()
        err = tracker.update(state)
        ih_p = interpolate(space, lambda x, y: exact.p(x, y, state.t))
        ih_pt = interpolate(space, lambda x, y: exact.p_t(x, y, state.t))
        disc_p = FieldVector(space, state.p.coeffs - ih_p.coeffs)
        disc_pt = state.pd.coeffs - ih_pt.coeffs
        dg_disc = forms.dg_seminorm(space, disc_p)
        l2_disc = float(np.sqrt(disc_pt @ (stepper.M @ disc_pt)))
        norm_time += time.perf_counter() - tic
        res.dg_p = np.nanmax((res.dg_p, err["dg_p"]))
        res.l2_pt = np.nanmax((res.l2_pt, err["l2_pt"]))
        res.dg_p_disc = np.nanmax((res.dg_p_disc, dg_disc))
        res.l2_pt_disc = np.nanmax((res.l2_pt_disc, l2_disc))
        res.rows.append((state.t,
                         diag.fp_iters if diag else 0,
                         diag.max_kappa_p if diag else stepper.max_kappa_p(state.p),
                         diag.energy if diag else stepper.energy(state),
                         err["l2_pt"], err["dg_p"], err["boundary_p"]))
        if diag:
            res.max_kappa_p = max(res.max_kappa_p, diag.max_kappa_p)
            res.max_fp_iters = max(res.max_fp_iters, diag.fp_iters)

    record(state)
    try:
        for _ in range(steps):
            state, diag = stepper.step(state, dt)
            record(state, diag)
    except Exception as exc:
        res.failure = (f"level n={n}: step to t={state.t + dt:.6g} failed: "
                       f"{exc}")
    res.timings = dict(stepper.timings)
    res.timings["norms"] = norm_time
    return res


def run_coupled_level(config: SimulationConfig, n: int) -> LevelResult:
    mesh, space, exact, astepper, astate = _study_setup(config, n)
    tpar = config.transport_params()
    tstepper = TransportStepper(
        space, tpar,
        f_u=mms.forcing_concentration(exact, tpar),
        g_in=mms.inflow_data(exact, tpar),
        penalty=config.penalty(), solver=config.solver())
    tstate = tstepper.init_state(
        interpolate(space, lambda x, y: exact.u(x, y, 0.0)))

    h = mesh.mesh_size
    dt_nom = config.level_timestep(h)
    steps = max(1, int(np.ceil(config.t_end / dt_nom - 1e-12)))
    dt = config.t_end / steps
    res = LevelResult(h=h, n=n, steps=steps, dt=dt)
    norms = mms.ErrorNorms(space)
    dg_acc = mms.TimeAccumulator(rule="left")
    norm_time = 0.0

    def record(tstate, adiag=None, tdiag=None):
        nonlocal norm_time
        tic = time.perf_counter()
        err = norms.evaluate(tstate.u, exact.u, exact.grad_u, tstate.t)
        norm_time += time.perf_counter() - tic
        dg_acc.add(tstate.t, err["dg"] ** 2)
        res.l2_u = np.nanmax((res.l2_u, err["l2"]))
        umin, umax = (tdiag.u_min, tdiag.u_max) if tdiag \
            else bounds_monitor(tstate.u)
        res.rows.append((tstate.t, umin, umax,
                         tdiag.mass if tdiag else np.nan,
                         err["l2"], err["dg"]))
        if adiag:
            res.max_kappa_p = max(res.max_kappa_p, adiag.max_kappa_p)
            res.max_fp_iters = max(res.max_fp_iters, adiag.fp_iters)

    record(tstate)
    try:
        for _ in range(steps):
            astate, tstate, adiag, tdiag = coupled_step(
                astepper, tstepper, astate, tstate, dt)
            record(tstate, adiag, tdiag)
    except Exception as exc:
        res.failure = (f"level n={n}: step to t={tstate.t + dt:.6g} failed: "
                       f"{exc}")
    res.dg_u_int = float(np.sqrt(dg_acc.integral))
    res.timings = {
        k: astepper.timings.get(k, 0.0) + tstepper.timings.get(k, 0.0)
        for k in ("assembly", "solve")}
    res.timings["norms"] = norm_time
    return res


def _level_worker(args):
    config, n, kind = args
    if kind == "pressure":
        return run_pressure_level(config, n)
    return run_coupled_level(config, n)


def _run_levels(config: SimulationConfig, kind: str) -> list:
    tasks = [(config, n, kind) for n in config.levels]
    if config.jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            return list(pool.map(_level_worker, tasks))
    return [_level_worker(t) for t in tasks]


def _study_report(config, results, names) -> RunReport:
    report = RunReport(header=config.echo())
    good = [r for r in results if not r.failure]
    hs = [r.h for r in good]
    for attr, label in names:
        vals = [getattr(r, attr) for r in good]
        if len(good) >= 2 and np.all(np.isfinite(vals)):
            report.eoc_tables[label] = mms.eoc(vals, hs)
    report.extra["levels"] = results
    report.timings = {
        k: sum(r.timings.get(k, 0.0) for r in results)
        for k in ("assembly", "solve", "norms")}
    return report


def _raise_on_failure(results):
    failures = [r.failure for r in results if r.failure]
    if failures:
        raise ModelError("; ".join(failures))


def cmd_convergence_pressure(config: SimulationConfig) -> RunReport:
    results = _run_levels(config, "pressure")
    report = _study_report(config, results, (
        ("dg_p", "dg_p"), ("l2_pt", "l2_pt"),
        ("dg_p_disc", "dg_p_disc"), ("l2_pt_disc", "l2_pt_disc")))
    out = Path(config.out_dir)
    for r in results:
        report.write_csv(out, f"pressure_steps_q{config.degree}_n{r.n}",
                         ("t", "fp_iters", "max_kappa_p", "energy",
                          "err_l2_pt", "err_dg_p", "err_bnd_p"),
                         r.rows if not r.failure else
                         r.rows + [("FAILED", r.failure, "", "", "", "", "")])
    report.write_eoc_csv(out, f"pressure_eoc_q{config.degree}")
    _raise_on_failure(results)
    return report


def cmd_convergence_coupled(config: SimulationConfig) -> RunReport:
    results = _run_levels(config, "coupled")
    report = _study_report(config, results, (
        ("dg_u_int", "dg_u_time_integrated"), ("l2_u", "l2_u")))
    out = Path(config.out_dir)
    for r in results:
        report.write_csv(out, f"coupled_steps_q{config.degree}_n{r.n}",
                         ("t", "u_min", "u_max", "mass", "err_l2_u", "err_dg_u"),
                         r.rows if not r.failure else
                         r.rows + [("FAILED", r.failure, "", "", "", "")])
    report.write_eoc_csv(out, f"coupled_eoc_q{config.degree}")
    _raise_on_failure(results)
    return report


# ---------------------------------------------------------------------------
# Physically parameterized simulation
# ---------------------------------------------------------------------------

@dataclass
class SimulateResult:
    times: np.ndarray
    delta: np.ndarray
    top_enhanced: np.ndarray
    top_reference: np.ndarray
    out_reference: np.ndarray
    u_min: float
    u_max: float
    max_kappa_p: float
    mass_series: np.ndarray
    report: RunReport


def cmd_simulate(config: SimulationConfig) -> SimulateResult:
    """Coupled run plus the constant-diffusivity reference.

    The coupling is one-way, so the single pressure trajectory drives both
    concentration runs; the reference ignores the pressure through D = D0.
    """
    mesh = build_rect_mesh((config.x0, config.x1), (config.y0, config.y1),
                           config.nx, config.ny)
    classify_boundary(mesh, (config.vx, config.vy))
    space = DgSpace(mesh, config.degree)
    apar = config.acoustic_params()

    amp, sig = config.source_amplitude, config.source_sigma
    om, cx, cy = config.source_frequency, config.source_center_x, config.source_center_y

    def f_p(x, y, t):
        r2 = (x - cx) ** 2 + (y - cy) ** 2
        return amp * np.exp(-r2 / sig ** 2) * np.sin(2.0 * np.pi * om * t)

    astepper = AcousticStepper(space, apar, newmark=config.newmark(),
                               penalty=config.penalty(), f_p=f_p, g_abs=None,
                               solver=config.solver())
    astate = astepper.init_state(FieldVector(space), FieldVector(space))

    tpar = config.transport_params()
    gin = config.g_in_value
    g_in = None if gin is None else (lambda x, y, nx, ny, t: np.full_like(x, gin))
    enhanced = TransportStepper(space, tpar, f_u=None, g_in=g_in,
                                penalty=config.penalty(), solver=config.solver())
    ref_par = TransportParams(d0=config.d0, d1=0.0, v=tpar.v)
    reference = TransportStepper(space, ref_par, f_u=None, g_in=g_in,
                                 penalty=config.penalty(), solver=config.solver())
    ust = enhanced.init_state(FieldVector(space))
    rst = reference.init_state(FieldVector(space))

    dt = config.dt if config.dt is not None else config.level_timestep(mesh.mesh_size)
    steps = max(1, int(np.ceil(config.t_end / dt - 1e-12)))
    dt = config.t_end / steps

    top = mesh.boundary_faces("top")
    # Strictly outflowing faces (v.n > 0): the zero-flux side walls carry no
    # outflow and would otherwise dominate the normalization.
    vn = mesh.face_normals @ np.array([config.vx, config.vy])
    gout = np.nonzero(mesh.boundary_mask & (vn > 0.0))[0]
    Path(config.out_dir).mkdir(parents=True, exist_ok=True)
    times = [0.0]
    top_e, top_r, out_r, mass = [0.0], [0.0], [0.0], [0.0]
    u_min, u_max, max_kp = 0.0, 0.0, 0.0
    out = Path(config.out_dir)
    report = RunReport(header=config.echo()
                       + ["mesh_note = nx, ny are cells per direction "
                          f"({mesh.num_elements} triangles)"])
    rows = []

    for k in range(steps):
        astate, adiag = astepper.step(astate, dt)
        ust, ediag = enhanced.step(ust, astate.p, dt)
        rst, rdiag = reference.step(rst, None, dt)
        times.append(astate.t)
        top_e.append(mms.boundary_integral(ust.u, top))
        top_r.append(mms.boundary_integral(rst.u, top))
        out_r.append(mms.boundary_integral(rst.u, gout))
        mass.append(ediag.mass)
        u_min = min(u_min, ediag.u_min)
        u_max = max(u_max, ediag.u_max)
        max_kp = max(max_kp, adiag.max_kappa_p)
        rows.append((astate.t, adiag.fp_iters, adiag.max_kappa_p,
                     ediag.u_min, ediag.u_max, ediag.mass,
                     ediag.d_range[0], ediag.d_range[1]))
        if config.vtk_every and (k + 1) % config.vtk_every == 0:
            write_vtk(out / f"fields_{k + 1:05d}.vtk", mesh, corner_data={
                "pressure": _corner_values(astate.p),
                "concentration": _corner_values(ust.u),
                "concentration_ref": _corner_values(rst.u)})

    delta = mms.relative_change_top(top_e, top_r, out_r)
    report.diagnostics["steps"] = rows
    report.write_csv(out, "simulate_steps",
                     ("t", "fp_iters", "max_kappa_p", "u_min", "u_max",
                      "mass", "d_min", "d_max"), rows)
    report.write_csv(out, "relative_change",
                     ("t", "delta_top", "top_enhanced", "top_reference",
                      "out_reference"),
                     list(zip(times, delta, top_e, top_r, out_r)))
    report.timings = {
        "assembly": astepper.timings["assembly"] + enhanced.timings["assembly"]
        + reference.timings["assembly"],
        "solve": astepper.timings["solve"] + enhanced.timings["solve"]
        + reference.timings["solve"]}
    return SimulateResult(
        times=np.asarray(times), delta=delta,
        top_enhanced=np.asarray(top_e), top_reference=np.asarray(top_r),
        out_reference=np.asarray(out_r), u_min=u_min, u_max=u_max,
        max_kappa_p=max_kp, mass_series=np.asarray(mass), report=report)


def _corner_values(fld: FieldVector):
    """Field values at the three corners of every element (VTK sampling)."""
    from .space import basis_values
    corners = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    phi = basis_values(fld.space.degree, corners)       # (3, nloc)
    return fld.by_element @ phi.T                        # (ne, 3)


# ---------------------------------------------------------------------------
# Self test
# ---------------------------------------------------------------------------

def cmd_selftest(config: SimulationConfig) -> int:
    """Fast invariant checks; returns the number of failures."""
    from .space import quad_rule
    failures = 0

    def check(name, ok):
        nonlocal failures
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
        failures += 0 if ok else 1

    rng = np.random.default_rng(42)
    mesh = build_rect_mesh((0, 1), (0, 2), 4, 8)
    classify_boundary(mesh, (0.0, 1.0))
    check("mesh tiles the domain",
          abs(mesh.areas.sum() - mesh.domain_area()) < 1e-12 * mesh.domain_area())

    rule = quad_rule(6)
    val = float(np.sum(rule.weights * rule.points[:, 0] ** 2
                       * rule.points[:, 1] ** 2))
    check("quadrature integrates x^2 y^2", abs(val - 1.0 / 180.0) < 1e-14)

    space = DgSpace(mesh, 2)
    pen = forms.pressure_penalty(2)
    A = forms.assemble_sip(space, 1.0, pen)
    check("SIP symmetry", abs(A - A.T).max() <= 1e-12 * abs(A).max())

    ok = True
    Bu = forms.assemble_upwind(space, (0.0, 1.0))
    for _ in range(20):
        phi = FieldVector(space, rng.standard_normal(space.num_dofs))
        lhs = float(phi.coeffs @ (Bu @ phi.coeffs))
        rhs = forms.upwind_energy(space, (0.0, 1.0), phi)
        ok = ok and abs(lhs - rhs) <= 1e-12 * (1.0 + abs(rhs))
    check("upwind identity", ok)

    par = AcousticParams(c=1.0, beta=0.0, kappa=0.0, alpha=0.0)
    stepper = AcousticStepper(space, par)
    p0 = interpolate(space, lambda x, y: np.sin(np.pi * x) * np.sin(np.pi * y / 2))
    state = stepper.init_state(p0, FieldVector(space))
    e0 = stepper.energy(state)
    for _ in range(20):
        state, _ = stepper.step(state, 0.01)
    check("Newmark energy conservation",
          abs(stepper.energy(state) - e0) <= 1e-10 * e0)
    print(f"{failures} failure(s)")
    return failures


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def _print_eoc(report: RunReport):
    for name, table in report.eoc_tables.items():
        print(f"\n{name}:")
        print(f"  {'h':>12}  {'error':>14}  {'rate':>8}")
        for h, e, r in zip(table.hs, table.errors, table.rates):
            rate = "" if np.isnan(r) else f"{r:8.4f}"
            print(f"  {h:12.8f}  {e:14.8e}  {rate}")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="sonodg",
        description="dG solver for the coupled nonlinear wave / "
                    "drug-transport system")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("convergence-pressure", "convergence-coupled", "simulate",
                 "selftest"):
        p = sub.add_parser(name)
        p.add_argument("--config", type=str, default=None)
        p.add_argument("--out", type=str, default=None)
        p.add_argument("--degree", type=int, default=None)
        p.add_argument("--levels", type=int, default=None,
                       help="number of refinement levels to run")
        p.add_argument("--dt-constant", type=float, default=None)
        p.add_argument("--jobs", type=int, default=None)
    args = parser.parse_args(argv)

    if args.command == "simulate":
        config = simulate_defaults()
    else:
        config = SimulationConfig(experiment=args.command)
    if args.config:
        config = parse_config(Path(args.config).read_text(encoding="utf-8"),
                              base=config)
    overrides = {}
    if args.out is not None:
        overrides["out_dir"] = args.out
    if args.degree is not None:
        overrides["degree"] = args.degree
    if args.levels is not None:
        overrides["levels"] = config.levels[:args.levels]
    if getattr(args, "dt_constant", None) is not None:
        overrides["dt_constant"] = args.dt_constant
    if args.jobs is not None:
        overrides["jobs"] = args.jobs
    if overrides:
        config = replace(config, **overrides)

    t0 = time.perf_counter()
    if args.command == "selftest":
        return 1 if cmd_selftest(config) else 0
    if args.command == "convergence-pressure":
        report = cmd_convergence_pressure(config)
        _print_eoc(report)
    elif args.command == "convergence-coupled":
        report = cmd_convergence_coupled(config)
        _print_eoc(report)
    else:
        result = cmd_simulate(config)
        peak = float(result.delta.max())
        print(f"relative-change peak: {peak:.6f} at "
              f"t = {result.times[int(result.delta.argmax())]:.3e}")
        print(f"u range over run: [{result.u_min:.4e}, {result.u_max:.4e}]")
        print(f"max |kappa p^h|: {result.max_kappa_p:.4e}")
        report = result.report
    wall = time.perf_counter() - t0
    print(f"\nwall time {wall:.1f}s; phases: " + ", ".join(
        f"{k}={v:.1f}s" for k, v in report.timings.items()))
    print(f"outputs in {config.out_dir}/")
    return 0


if __name__ == "__main__":
    sys.exit(main())
