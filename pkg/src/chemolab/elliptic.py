"""The screened Poisson solve -lap v + v = s and the Neumann eigenpairs of -lap + I.

Cell-centered cosines are exact discrete eigenfunctions of the mirror-ghost
operator, so both the continuum eigenvalues 1 + sum((k_i*pi/L_i)**2) and their
discrete counterparts 1 + sum((4/h_i**2)*sin(k_i*pi*h_i/(2*L_i))**2) are
available in closed form.  The solve is direct (symmetric banded) in 1D and
unpreconditioned conjugate gradients in 2D; in both cases the constant mode is
projected exactly afterwards, which pins the discrete compatibility identity
sum(v) = sum(s) to roundoff.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import NoConvergence, NonpositiveV, OutOfRange
from .grid import Field, Grid, cell_gradients, integrate

CG_RTOL = 1e-12            # well under the 1e-10 contract
CG_MAXITER_PER_CELL = 10


def continuum_eigenvalues(
    lengths: tuple[float, ...], count: int
) -> list[tuple[float, list[tuple[int, ...]]]]:
    """First ``count`` distinct eigenvalues of -lap + I with zero-flux walls.

    Returns (sigma, index tuples) sorted ascending; ties within relative
    1e-12 are grouped, so the list length equals the number of distinct
    eigenvalues and the group size is the multiplicity.
    """
    if count < 1:
        raise OutOfRange("count", f"must be >= 1 (got {count})")
    dim = len(lengths)
    # Along one axis, `count` distinct values need at most k = count - 1.
    kmax = count
    entries = []
    for ks in itertools.product(range(kmax + 1), repeat=dim):
        sigma = 1.0 + sum((k * math.pi / L) ** 2 for k, L in zip(ks, lengths))
        entries.append((sigma, ks))
    entries.sort(key=lambda e: (e[0], e[1]))
    groups: list[tuple[float, list[tuple[int, ...]]]] = []
    for sigma, ks in entries:
        if groups and abs(sigma - groups[-1][0]) <= 1e-12 * max(1.0, sigma):
            groups[-1][1].append(ks)
        else:
            groups.append((sigma, [ks]))
        if len(groups) > count:
            break
    return groups[:count]


def discrete_sigma(grid: Grid, ks: tuple[int, ...]) -> float:
    """Eigenvalue of the assembled (-lap_h + I) for the sampled-cosine mode."""
    out = 1.0
    for k, L, h in zip(ks, grid.lengths, grid.spacings):
        out += 4.0 / h**2 * math.sin(k * math.pi * h / (2.0 * L)) ** 2
    return out


def _cosine_mode(grid: Grid, ks: tuple[int, ...]) -> np.ndarray:
    vals = np.ones(grid.shape)
    for ax, k in enumerate(ks):
        x = grid.axis_centers(ax)
        mode = np.cos(k * math.pi * x / grid.lengths[ax])
        shape = [1] * grid.dim
        shape[ax] = -1
        vals = vals * mode.reshape(shape)
    return vals


@dataclass(frozen=True)
class EigenPair:
    """A distinct Neumann eigenvalue of -lap + I with its mode data.

    ``indices`` lists every cosine index tuple sharing the continuum value;
    the eigenfunction is the sampled cosine product of the first one.
    """

    indices: tuple[tuple[int, ...], ...]
    sigma: float
    sigma_h: float
    multiplicity: int
    eigenfunction: Field

    @property
    def index(self) -> tuple[int, ...]:
        return self.indices[0]

    @property
    def descriptor(self) -> str:
        names = "xy"
        factors = [
            f"cos({k}*pi*{names[ax]}/{L:g})"
            for ax, (k, L) in enumerate(zip(self.index, self.eigenfunction.grid.lengths))
            if k > 0
        ]
        return " * ".join(factors) if factors else "1"


def neumann_eigenvalues(grid: Grid, count: int) -> list[EigenPair]:
    """First ``count`` distinct eigenpairs, sorted by continuum eigenvalue."""
    if count > grid.n_cells:
        raise OutOfRange("count", f"exceeds cell count {grid.n_cells}")
    groups = continuum_eigenvalues(grid.lengths, count)
    pairs = []
    for sigma, members in groups:
        rep = members[0]
        pairs.append(
            EigenPair(
                indices=tuple(members),
                sigma=sigma,
                sigma_h=discrete_sigma(grid, rep),
                multiplicity=len(members),
                eigenfunction=Field(_cosine_mode(grid, rep), grid),
            )
        )
    return pairs


# ---------------------------------------------------------------------------
# solves
# ---------------------------------------------------------------------------


def _banded_helmholtz_1d(grid: Grid) -> np.ndarray:
    n = grid.shape[0]
    h = grid.spacings[0]
    ab = np.zeros((2, n))
    ab[0, 1:] = -1.0 / h**2
    ab[1, :] = 1.0 + 2.0 / h**2
    ab[1, 0] = ab[1, -1] = 1.0 + 1.0 / h**2
    return ab


def solve_helmholtz_array(grid: Grid, source: np.ndarray, x0: np.ndarray | None = None) -> np.ndarray:
    """Solve (-lap_h + I) v = s with zero-flux walls; see solve_helmholtz."""
    if not np.all(np.isfinite(source)):
        raise OutOfRange("source", "must be finite")
    if grid.dim == 1:
        v = scipy.linalg.solveh_banded(_banded_helmholtz_1d(grid), source)
    else:
        A = sp.identity(grid.n_cells, format="csr") - grid.laplacian_matrix
        b = source.ravel()
        v, info = spla.cg(
            A,
            b,
            x0=None if x0 is None else x0.ravel(),
            rtol=CG_RTOL,
            atol=0.0,
            maxiter=CG_MAXITER_PER_CELL * grid.n_cells,
        )
        if info != 0:
            raise NoConvergence(f"Helmholtz CG failed (info={info})")
        v = v.reshape(grid.shape)
    # Constants are eigenvectors with eigenvalue 1, so shifting by the mass
    # defect restores sum(v) = sum(s) exactly without degrading the residual.
    v += (source.sum() - v.sum()) / grid.n_cells
    return v


def solve_helmholtz(grid: Grid, source: Field, x0: Field | None = None) -> Field:
    """v with (-lap_h + I) v = source, mirror-ghost Neumann stencil.

    1D is a direct symmetric banded solve; 2D is conjugate gradients to
    relative residual CG_RTOL (cap 10 iterations per cell, NoConvergence
    beyond).  Nonnegative sources give nonnegative v (M-matrix).
    """
    x0a = None if x0 is None else x0.values
    return Field(solve_helmholtz_array(grid, source.values, x0a), grid)


def helmholtz_matrix(grid: Grid) -> sp.csr_matrix:
    """Assembled (-lap_h + I), symmetric positive definite."""
    return (sp.identity(grid.n_cells, format="csr") - grid.laplacian_matrix).tocsr()


def elliptic_identity_residual(u: Field, v: Field, beta: float, kappa: float) -> float:
    """Residual of int(|grad v|**2 / v**2) + beta*int(u**kappa / v) - |domain|.

    The identity holds exactly in the continuum whenever v solves the
    chemical equation with source beta*u**kappa; the discrete residual decays
    at second order.  Gradients are centered cell differences, integrals
    midpoint sums.  Raises NonpositiveV unless v > 0 everywhere.
    """
    grid = u.grid
    if not np.all(v.values > 0.0):
        raise NonpositiveV("v must be strictly positive")
    grads = cell_gradients(v.values, grid)
    grad_sq = sum(g**2 for g in grads)
    term1 = integrate(grad_sq / v.values**2, grid)
    term2 = beta * integrate(u.values**kappa / v.values, grid)
    return term1 + term2 - grid.volume
