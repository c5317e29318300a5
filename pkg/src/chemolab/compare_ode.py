"""Spatially homogeneous ODE systems that sandwich the PDE dynamics.

For the growth family f(u) = u*(a - b*u**kappa) with secretion u**kappa, the
pair (ubar, ulow) solving

    ubar' = chi*ubar*(ubar**kappa - ulow) + f(ubar)
    w'    = chi*w*(ulow - ubar**kappa) + f(w),      ulow = w**kappa

from the extremes of the initial data traps the PDE solution between them:
ulow(t) <= u(x,t)**kappa <= ubar(t)**kappa.  The gap log(ubar**kappa/ulow)
contracts at least at the explicit rate

    eps0 = kappa * (ulow(0)/ubar(0)**kappa) * (a/b) * (b - 2*chi)

whenever b > 2*chi.  The transformed variable w = ulow**(1/kappa) is the
integration state, which keeps the fractional power regular near zero.

For general growth functions, ``envelope_odes`` integrates the upper
envelope z and the lower envelope y that bracket where the density can
settle once the chemical feedback is accounted for.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import solve_ivp

from .errors import InvariantBreach, OutOfRange, ZUnbounded
from .evolve import RunReport
from .model import Kinetics, ModelParams

ODE_RTOL = 1e-10
ODE_RTOL_RETRY = 1e-12
ORDER_TOL = 1e-9           # sandwich ordering along outputs
MONOTONE_SLACK = 1e-12     # log-ratio decrease between consecutive outputs
Z_CAP = 1e6
STATIONARY_TOL = 1e-10


def sandwich_contraction_rate(p: ModelParams, ulow0: float, ubar0: float) -> float:
    """The explicit contraction rate eps0 of the sandwich gap.

    Requires b >= 2*chi (zero at equality, which is the degenerate case) and
    the ordering ubar0 >= (a/b)**(1/kappa) >= ulow0**(1/kappa) > 0.
    """
    if p.b < 2.0 * p.chi:
        raise OutOfRange("b", f"need b >= 2*chi (got b = {p.b}, chi = {p.chi})")
    eqk = p.a / p.b
    if not ulow0 > 0:
        raise OutOfRange("ulow0", f"must be > 0 (got {ulow0})")
    if ulow0 > eqk * (1 + 1e-12):
        raise OutOfRange("ulow0", f"must be <= a/b = {eqk} (got {ulow0})")
    if ubar0 < eqk ** (1.0 / p.kappa) * (1 - 1e-12):
        raise OutOfRange(
            "ubar0", f"must be >= (a/b)**(1/kappa) = {eqk ** (1.0 / p.kappa)} (got {ubar0})"
        )
    return p.kappa * (ulow0 / ubar0**p.kappa) * eqk * (p.b - 2.0 * p.chi)


@dataclass
class SandwichTrajectory:
    times: np.ndarray
    ubar: np.ndarray
    w: np.ndarray              # lower solution in the transformed variable
    chi: float
    a: float
    b: float
    kappa: float
    u0_min: float
    u0_max: float
    eps0: float | None
    dense: Callable[[float], np.ndarray]

    @property
    def ulow(self) -> np.ndarray:
        return self.w**self.kappa

    @property
    def log_ratio(self) -> np.ndarray:
        """log(ubar**kappa / ulow), the contracting gap."""
        return self.kappa * (np.log(self.ubar) - np.log(self.w))

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("t,ubar,ulow,log_ratio\n")
            for t, ub, ul, lr in zip(self.times, self.ubar, self.ulow, self.log_ratio):
                fh.write(f"{t:.17g},{ub:.17g},{ul:.17g},{lr:.17g}\n")


def _integrate_sandwich(p: ModelParams, y0, horizon, rtol, n_out):
    kap = p.kappa

    def f(s):
        return s * (p.a - p.b * s**kap)

    def rhs(_t, y):
        ub, w = y
        gap = ub**kap - w**kap
        return [p.chi * ub * gap + f(ub), -p.chi * w * gap + f(w)]

    sol = solve_ivp(
        rhs,
        (0.0, horizon),
        y0,
        method="RK45",
        rtol=rtol,
        atol=rtol * 1e-2,
        dense_output=True,
        t_eval=np.linspace(0.0, horizon, n_out),
    )
    if not sol.success:
        raise InvariantBreach(f"sandwich integration failed: {sol.message}")
    return sol


def _check_sandwich_invariants(p: ModelParams, t, ubar, w):
    eq = p.equilibrium
    if np.any(w <= 0.0):
        return "lower solution touched zero"
    if np.any(w > eq + ORDER_TOL) or np.any(ubar < eq - ORDER_TOL):
        return "ordering ulow**(1/kappa) <= (a/b)**(1/kappa) <= ubar failed"
    if p.b > 2.0 * p.chi:
        lr = p.kappa * (np.log(ubar) - np.log(w))
        if np.any(np.diff(lr) > MONOTONE_SLACK):
            return "log-ratio increased"
    return None


def solve_sandwich(
    p: ModelParams,
    u0_min: float,
    u0_max: float,
    horizon: float,
    n_out: int = 2001,
) -> SandwichTrajectory:
    """Integrate the sandwich pair from the initial-data extremes.

    Adaptive 4th/5th-order Runge-Kutta at relative tolerance 1e-10; the
    ordering invariants are asserted along the trajectory and a breach
    triggers one retry at 1e-12 before raising InvariantBreach.
    """
    if not p.b > p.chi:
        raise OutOfRange("b", f"need b > chi for boundedness (got b = {p.b}, chi = {p.chi})")
    if not u0_min > 0:
        raise OutOfRange("u0_min", f"must be > 0 (got {u0_min})")
    if u0_max < u0_min:
        raise OutOfRange("u0_max", f"must be >= u0_min (got {u0_max} < {u0_min})")
    eq = p.equilibrium
    y0 = [max(u0_max, eq), min(u0_min, eq)]
    breach = None
    for rtol in (ODE_RTOL, ODE_RTOL_RETRY):
        sol = _integrate_sandwich(p, y0, horizon, rtol, n_out)
        ubar, w = sol.y
        breach = _check_sandwich_invariants(p, sol.t, ubar, w)
        if breach is None:
            break
    if breach is not None:
        raise InvariantBreach(breach)
    eps0 = None
    if p.b > 2.0 * p.chi:
        eps0 = sandwich_contraction_rate(p, y0[1] ** p.kappa, y0[0])
    return SandwichTrajectory(
        times=sol.t,
        ubar=ubar,
        w=w,
        chi=p.chi,
        a=p.a,
        b=p.b,
        kappa=p.kappa,
        u0_min=float(u0_min),
        u0_max=float(u0_max),
        eps0=eps0,
        dense=sol.sol,
    )


def check_sandwich(traj: SandwichTrajectory, report: RunReport) -> float:
    """Worst violation of ulow <= u**kappa <= ubar**kappa over all snapshots.

    Zero in the continuum; discretely it must stay below 10*h**2.  The PDE
    run and the trajectory must share the parameter set and the initial-data
    extremes, and the regime must actually be the sandwiched one.
    """
    p = report.params
    if report.f_kind != "generalized-logistic":
        raise OutOfRange("run", f"growth must be u*(a - b*u**kappa) (got {report.f_kind})")
    for name, got, want in (
        ("chi", traj.chi, p.chi),
        ("a", traj.a, p.a),
        ("b", traj.b, p.b),
        ("kappa", traj.kappa, p.kappa),
        ("beta", 1.0, p.beta),
        ("u0_min", traj.u0_min, report.u0_min),
        ("u0_max", traj.u0_max, report.u0_max),
    ):
        if abs(got - want) > 1e-12 * max(1.0, abs(got), abs(want)):
            raise OutOfRange(name, f"ODE/PDE mismatch: {got} vs {want}")
    if not p.b > 2.0 * p.chi:
        raise OutOfRange("b", "the comparison needs b > 2*chi")
    if not report.snapshots:
        raise OutOfRange("run", "no snapshots recorded")
    worst = 0.0
    for t, u, _v in report.snapshots:
        ub, w = traj.dense(t)
        ulow = w**traj.kappa
        uk = u**traj.kappa
        worst = max(
            worst,
            float(ulow - uk.min()),
            float(uk.max() - ub**traj.kappa),
        )
    return max(worst, 0.0)


# ---------------------------------------------------------------------------
# envelope ODEs for general growth functions
# ---------------------------------------------------------------------------


@dataclass
class EnvelopeTrajectories:
    times_z: np.ndarray
    z: np.ndarray
    z_inf: float
    times_y: np.ndarray
    y: np.ndarray
    y_inf: float


def envelope_odes(
    p: ModelParams,
    k: Kinetics,
    u0_min: float,
    u0_max: float,
    horizon: float,
    n_out: int = 2001,
) -> EnvelopeTrajectories:
    """Upper envelope z' = f(z) + chi*z**(kappa+1) from max u0, then the lower
    envelope y' = f(y) + chi*y**(kappa+1) - chi*z_inf**kappa*y from min u0.

    z must settle (|z'| < 1e-10 at the horizon) for z_inf to be meaningful;
    escape beyond Z_CAP raises ZUnbounded.  y_inf is the infimum over the
    trailing half of the y trajectory.
    """
    if not u0_min > 0:
        raise OutOfRange("u0_min", f"must be > 0 (got {u0_min})")
    kap = p.kappa

    def z_rhs(_t, z):
        return [float(k.f(np.array(z))[0]) + p.chi * z[0] ** (kap + 1.0)]

    def escape(_t, z):
        return z[0] - Z_CAP

    escape.terminal = True
    sol_z = solve_ivp(
        z_rhs, (0.0, horizon), [u0_max], method="RK45", rtol=ODE_RTOL,
        atol=1e-12, events=escape, t_eval=np.linspace(0.0, horizon, n_out),
    )
    if sol_z.t_events[0].size > 0 or (sol_z.y.size and sol_z.y[0].max() >= Z_CAP):
        raise ZUnbounded(
            f"upper envelope escaped beyond {Z_CAP:.0e} at t = {sol_z.t_events[0][0]:.6g}"
            if sol_z.t_events[0].size
            else f"upper envelope exceeded {Z_CAP:.0e}"
        )
    z_inf = float(sol_z.y[0][-1])
    z_rate = abs(z_rhs(0.0, [z_inf])[0])
    if z_rate >= STATIONARY_TOL:
        raise OutOfRange(
            "horizon", f"z not stationary at horizon (|z'| = {z_rate:.3e}); extend it"
        )

    def y_rhs(_t, y):
        return [
            float(k.f(np.array(y))[0])
            + p.chi * y[0] ** (kap + 1.0)
            - p.chi * z_inf**kap * y[0]
        ]

    sol_y = solve_ivp(
        y_rhs, (0.0, horizon), [u0_min], method="RK45", rtol=ODE_RTOL,
        atol=1e-12, t_eval=np.linspace(0.0, horizon, n_out),
    )
    tail = sol_y.y[0][sol_y.t >= 0.5 * horizon]
    return EnvelopeTrajectories(
        times_z=sol_z.t,
        z=sol_z.y[0],
        z_inf=z_inf,
        times_y=sol_y.t,
        y=sol_y.y[0],
        y_inf=float(tail.min()),
    )
