"""IMEX time integration of the coupled density/chemical system.

One step treats chemotaxis and reaction explicitly in conservative flux form
and diffusion implicitly, then refreshes the chemical by an elliptic solve
(the chemical equilibrates instantly, so lagging it would be inconsistent):

    flux   F = chi * avg(u) * grad(v)          on interior faces, 0 on walls
    u*       = u + dt * (-div F + f(u))
    (I - dt*lap_h) u_new = u*
    v_new    = helmholtz(g(u_new))

Interior fluxes telescope and the implicit operator preserves cell sums, so
the discrete mass law  sum(u_new) = sum(u) + dt*sum(f(u))  holds to roundoff;
each step records its relative mass residual.  Tiny negative densities are
clamped and counted; overshoot beyond 1e-8 of the max is a hard error because
it signals under-resolution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .diagnostics import lp_norm
from .elliptic import solve_helmholtz_array
from .errors import NegativeOvershoot, NoConvergence, OutOfRange, StalledDt
from .grid import (
    Field,
    Grid,
    face_averages,
    face_divergence,
    face_gradients,
    gradient_inf_norm,
    integrate,
)
from .model import Kinetics, ModelParams

DT_SAFETY = 0.4
DT_MAX_FACTOR = 10.0       # dt_max = 10 * h**2
DT_MIN = 1e-12
BLOWUP_LINF = 1e6
CLAMP_SOFT = 1e-12         # negatives below this fraction of max(u) are routine
CLAMP_HARD = 1e-8          # beyond this fraction the step errors out
IMPLICIT_RTOL = 1e-13      # 2D implicit-diffusion CG (mass is projected exactly)
MONITOR_EPS = 0.5          # epsilon in the monitor exponent kappa*n/2 + eps
TARGET_TOL = 1e-6          # convergence threshold against a constant target


@dataclass(frozen=True)
class SimState:
    t: float
    u: Field
    v: Field
    dt: float
    step_count: int = 0
    clamp_count: int = 0
    clamped_mass: float = 0.0
    last_mass_residual: float = 0.0

    @classmethod
    def initial(cls, p: ModelParams, k: Kinetics, u0: Field, dt: float = 0.0) -> "SimState":
        v = Field(solve_helmholtz_array(u0.grid, k.g(u0.values)), u0.grid)
        return cls(t=0.0, u=u0.copy(), v=v, dt=dt)


def adapt_dt(s: SimState, p: ModelParams, k: Kinetics) -> float:
    """Stable explicit step: advective CFL against chi*|grad v| plus a
    reaction bound from |f'| over the observed density range, with safety
    DT_SAFETY, cap 10*h**2 and hard floor DT_MIN (StalledDt below it)."""
    grid = s.u.grid
    tiny = np.finfo(float).tiny
    h = min(grid.spacings)
    grad_v = gradient_inf_norm(s.v.values, grid)
    advective = h / (p.chi * grad_v + tiny)
    reaction = 1.0 / (float(np.max(np.abs(k.f_prime(s.u.values)))) + tiny)
    dt = DT_SAFETY * min(advective, reaction)
    dt = min(dt, DT_MAX_FACTOR * h**2)
    if dt < DT_MIN:
        raise StalledDt(f"dt = {dt:.3e} fell below {DT_MIN:.0e}")
    return dt


def _implicit_diffusion(grid: Grid, rhs: np.ndarray, dt: float) -> np.ndarray:
    if grid.dim == 1:
        n = grid.shape[0]
        h = grid.spacings[0]
        ab = np.zeros((2, n))
        ab[0, 1:] = -dt / h**2
        ab[1, :] = 1.0 + 2.0 * dt / h**2
        ab[1, 0] = ab[1, -1] = 1.0 + dt / h**2
        out = scipy.linalg.solveh_banded(ab, rhs)
    else:
        A = sp.identity(grid.n_cells, format="csr") - dt * grid.laplacian_matrix
        out, info = spla.cg(
            A, rhs.ravel(), x0=rhs.ravel(), rtol=IMPLICIT_RTOL, atol=0.0,
            maxiter=10 * grid.n_cells,
        )
        if info != 0:
            raise NoConvergence(f"implicit diffusion CG failed (info={info})")
        out = out.reshape(grid.shape)
    # The implicit operator maps constants to themselves; project the solver's
    # mass defect onto the constant mode so cell sums are conserved exactly.
    out += (rhs.sum() - out.sum()) / grid.n_cells
    return out


def step(s: SimState, p: ModelParams, k: Kinetics) -> SimState:
    """One IMEX step of size s.dt; see the module docstring for the scheme."""
    grid = s.u.grid
    u = s.u.values
    grads = face_gradients(s.v.values, grid)
    avgs = face_averages(u, grid)
    chemo = [p.chi * a * g for a, g in zip(avgs, grads)]
    f_old = k.f(u)
    u_star = u + s.dt * (-face_divergence(chemo, grid) + f_old)
    u_new = _implicit_diffusion(grid, u_star, s.dt)

    mass_old = u.sum()
    mass_residual = abs(u_new.sum() - mass_old - s.dt * f_old.sum()) / max(
        abs(mass_old), np.finfo(float).tiny
    )

    u_max = max(float(u_new.max()), 0.0)
    u_min = float(u_new.min())
    clamp_count, clamped_mass = s.clamp_count, s.clamped_mass
    if u_min < 0.0:
        if u_min < -CLAMP_HARD * u_max:
            raise NegativeOvershoot(
                f"min(u) = {u_min:.3e} below -{CLAMP_HARD:.0e}*max(u) at t = {s.t + s.dt:.6g}"
            )
        negatives = u_new < 0.0
        clamp_count += int(np.count_nonzero(u_new < -CLAMP_SOFT * u_max))
        clamped_mass += float(-u_new[negatives].sum()) * grid.cell_volume
        u_new = np.where(negatives, 0.0, u_new)

    v_new = solve_helmholtz_array(grid, k.g(u_new), x0=s.v.values)
    return SimState(
        t=s.t + s.dt,
        u=Field(u_new, grid),
        v=Field(v_new, grid),
        dt=s.dt,
        step_count=s.step_count + 1,
        clamp_count=clamp_count,
        clamped_mass=clamped_mass,
        last_mass_residual=mass_residual,
    )


def detect_blowup(s: SimState) -> bool:
    """Heuristic evidence only: sup-norm beyond BLOWUP_LINF or a stalled step."""
    return float(np.max(np.abs(s.u.values))) > BLOWUP_LINF or s.dt < DT_MIN


SERIES_COLUMNS = ("t", "mass", "linf_u", "lp_u", "linf_v", "linf_gradv", "dt")


@dataclass
class RunReport:
    """Diagnostics time series plus termination status of one run.

    status is one of Converged / ReachedHorizon / BlowUp / StalledDt.  The
    series rows carry SERIES_COLUMNS; lp_u is the boundedness-monitor norm
    with exponent p_star = kappa*n/2 + eps.  l1_bound records the a-priori
    mass bound max(int u0, c*|domain|) built from the verified damping
    envelope together with the observed supremum of int u.
    """

    status: str
    final_time: float
    series: np.ndarray
    p_star: float
    params: ModelParams
    f_kind: str
    u0_min: float
    u0_max: float
    final_u: Field
    final_v: Field
    snapshots: list[tuple[float, np.ndarray, np.ndarray]] = field(default_factory=list)
    target_errors: list[tuple[float, float]] = field(default_factory=list)
    clamp_count: int = 0
    clamped_mass: float = 0.0
    max_mass_residual: float = 0.0
    l1_bound: float = 0.0
    l1_observed: float = 0.0
    blowup_norms: tuple[float, float] | None = None
    steps: int = 0

    @property
    def l1_bound_ok(self) -> bool:
        return self.l1_observed <= self.l1_bound * 1.01

    def column(self, name: str) -> np.ndarray:
        return self.series[:, SERIES_COLUMNS.index(name)]

    def write_series_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(",".join(SERIES_COLUMNS) + "\n")
            for row in self.series:
                fh.write(",".join(f"{x:.17g}" for x in row) + "\n")
            fh.write(f"# status={self.status} final_time={self.final_time:.17g}\n")


def _gronwall_constant(k: Kinetics) -> float:
    """c = max over s >= 0 of a_env - b_env*s**theta_env + s."""
    a_env, b_env, th = k.envelope
    s_star = (1.0 / (b_env * th)) ** (1.0 / (th - 1.0))
    return a_env + s_star - b_env * s_star**th


def run(
    p: ModelParams,
    k: Kinetics,
    u0: Field,
    horizon: float,
    target: float | None = None,
    eps: float = MONITOR_EPS,
    rows: int = 500,
    snapshot_times=(),
) -> RunReport:
    """Step until t >= horizon, convergence to a constant target, or blow-up.

    Diagnostics are appended roughly ``rows`` times over the horizon and
    always at the first and last step.  Snapshot fields are copied out the
    first time t reaches each requested snapshot time.
    """
    if not u0.is_finite():
        raise OutOfRange("u0", "must be finite")
    if float(u0.values.min()) < 0.0:
        raise OutOfRange("u0", f"must be nonnegative (min = {u0.values.min():.3e})")
    if float(u0.values.max()) == 0.0:
        raise OutOfRange("u0", "must not be identically zero")
    if not horizon > 0:
        raise OutOfRange("horizon", f"must be > 0 (got {horizon})")

    grid = u0.grid
    # monitored norm exponent; floored at 1 so sublinear secretion in 1D
    # still logs a valid (stronger) norm
    p_star = max(1.0, p.kappa * p.dim / 2.0 + eps)
    state = SimState.initial(p, k, u0)
    pending_snapshots = sorted(float(t) for t in snapshot_times)
    snapshots: list[tuple[float, np.ndarray, np.ndarray]] = []

    def take_snapshots(st: SimState):
        while pending_snapshots and st.t >= pending_snapshots[0] - 1e-12:
            pending_snapshots.pop(0)
            snapshots.append((st.t, st.u.values.copy(), st.v.values.copy()))

    def series_row(st: SimState):
        return (
            st.t,
            integrate(st.u.values, grid),
            float(np.max(np.abs(st.u.values))),
            lp_norm(st.u, p_star),
            float(np.max(np.abs(st.v.values))),
            gradient_inf_norm(st.v.values, grid),
            st.dt,
        )

    series = [series_row(state)]
    target_errors: list[tuple[float, float]] = []
    take_snapshots(state)

    status = "ReachedHorizon"
    blowup_norms = None
    max_mass_residual = 0.0
    l1_observed = integrate(u0.values, grid)
    interval = 1

    while state.t < horizon * (1.0 - 1e-12):
        try:
            dt = adapt_dt(state, p, k)
        except StalledDt:
            status = "StalledDt"
            blowup_norms = (series[-1][2], series[-1][3])
            break
        if state.step_count == 0:
            interval = max(1, math.floor(horizon / (rows * dt)))
        dt = min(dt, horizon - state.t)
        state = step(replace(state, dt=dt), p, k)
        max_mass_residual = max(max_mass_residual, state.last_mass_residual)
        l1_observed = max(l1_observed, integrate(state.u.values, grid))
        take_snapshots(state)

        record = state.step_count % interval == 0 or state.t >= horizon * (1.0 - 1e-12)
        if record:
            series.append(series_row(state))
        if target is not None:
            err = float(np.max(np.abs(state.u.values - target)))
            if record:
                target_errors.append((state.t, err))
            if err < TARGET_TOL:
                status = "Converged"
                if not record:
                    series.append(series_row(state))
                    target_errors.append((state.t, err))
                break
        if detect_blowup(state):
            status = "BlowUp"
            blowup_norms = (
                float(np.max(np.abs(state.u.values))),
                lp_norm(state.u, p_star),
            )
            if not record:
                series.append(series_row(state))
            break

    return RunReport(
        status=status,
        final_time=state.t,
        series=np.array(series),
        p_star=p_star,
        params=p,
        f_kind=k.f_kind,
        u0_min=float(u0.values.min()),
        u0_max=float(u0.values.max()),
        final_u=state.u,
        final_v=state.v,
        snapshots=snapshots,
        target_errors=target_errors,
        clamp_count=state.clamp_count,
        clamped_mass=state.clamped_mass,
        max_mass_residual=max_mass_residual,
        l1_bound=max(integrate(u0.values, grid), _gronwall_constant(k) * grid.volume),
        l1_observed=l1_observed,
        blowup_norms=blowup_norms,
        steps=state.step_count,
    )
