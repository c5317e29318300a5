"""Norms, monitor exponents, and exponential-rate fitting shared by all modules."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NonPositiveValues, OutOfRange
from .grid import Field


def lp_norm(field: Field, p: float) -> float:
    """Midpoint-rule Lp norm, (sum |u|**p h**n)**(1/p); max-abs for p = inf."""
    if p == math.inf or p == np.inf:
        return float(np.max(np.abs(field.values)))
    if not p >= 1:
        raise OutOfRange("p", f"exponent must be >= 1 or inf (got {p})")
    vol = field.grid.cell_volume
    return float((np.sum(np.abs(field.values) ** p) * vol) ** (1.0 / p))


def monitor_exponent(n: int, kappa: float, eps: float = 0.5) -> tuple[float, float]:
    """The boundedness-monitor exponent p* = kappa*n/2 + eps and the
    companion elliptic-embedding exponent q' = n*r/(kappa*n - r) with r = p*.

    eps must be positive and small enough that r < kappa*n, else the
    embedding exponent is undefined and the pair is rejected.
    """
    if not eps > 0:
        raise OutOfRange("eps", f"must be > 0 (got {eps})")
    r = kappa * n / 2.0 + eps
    if r >= kappa * n:
        raise OutOfRange("eps", f"p* = {r} >= kappa*n = {kappa * n}; embedding undefined")
    q_prime = n * r / (kappa * n - r)
    return r, q_prime


@dataclass(frozen=True)
class SeriesFit:
    """Log-linear least-squares fit over a trailing window of a time series."""

    rate: float
    window: tuple[float, float]
    residual: float
    n_points: int


def fit_exponential_decay(
    times, values, window_fraction: float = 0.5
) -> SeriesFit:
    """Least squares on (t, ln value) over the trailing window.

    The fitted ``rate`` is the slope (negative for decay); ``residual`` is the
    root-mean-square misfit of the log-linear model, reported so a bad fit is
    never silent.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float)
    if t.shape != y.shape or t.ndim != 1:
        raise OutOfRange("series", "times and values must be equal-length 1D")
    if np.any(y <= 0.0):
        raise NonPositiveValues("series contains nonpositive values")
    if not 0 < window_fraction <= 1:
        raise OutOfRange("window_fraction", f"must be in (0, 1] (got {window_fraction})")
    t_cut = t[-1] - window_fraction * (t[-1] - t[0])
    mask = t >= t_cut
    if int(mask.sum()) < 10:
        raise OutOfRange("window", f"need >= 10 points in window (got {int(mask.sum())})")
    tw, yw = t[mask], np.log(y[mask])
    slope, intercept = np.polyfit(tw, yw, 1)
    resid = yw - (slope * tw + intercept)
    return SeriesFit(
        rate=float(slope),
        window=(float(tw[0]), float(tw[-1])),
        residual=float(np.sqrt(np.mean(resid**2))),
        n_points=int(mask.sum()),
    )
