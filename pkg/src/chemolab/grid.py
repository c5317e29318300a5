"""Uniform cell-centered tensor grids with zero-flux (mirror ghost) boundaries.

Cell centers sit at (i + 1/2)*h, so the mirror ghost value equals the first
interior value and the zero-flux condition is exact to second order.  All
discrete calculus used elsewhere lives here: face gradients, conservative
divergence of face fluxes, the mirror-ghost Laplacian (array form and sparse
assembly), centered cell gradients, and midpoint-rule integrals.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import OutOfRange
from .model import ModelParams

MIN_CELLS_PER_AXIS = 8


@dataclass(frozen=True)
class Grid:
    lengths: tuple[float, ...]
    shape: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "lengths", tuple(float(L) for L in self.lengths))
        object.__setattr__(self, "shape", tuple(int(n) for n in self.shape))
        if len(self.lengths) != len(self.shape) or len(self.shape) not in (1, 2):
            raise OutOfRange("grid", "need 1 or 2 axes with matching lengths")
        if any(n < MIN_CELLS_PER_AXIS for n in self.shape):
            raise OutOfRange(
                "resolution", f"need >= {MIN_CELLS_PER_AXIS} cells per axis (got {self.shape})"
            )

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def spacings(self) -> tuple[float, ...]:
        return tuple(L / n for L, n in zip(self.lengths, self.shape))

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.shape))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacings))

    @property
    def volume(self) -> float:
        return float(np.prod(self.lengths))

    def axis_centers(self, axis: int) -> np.ndarray:
        h = self.spacings[axis]
        return (np.arange(self.shape[axis]) + 0.5) * h

    @cached_property
    def coordinates(self) -> tuple[np.ndarray, ...]:
        """Cell-center coordinate arrays, each of full grid shape."""
        axes = [self.axis_centers(ax) for ax in range(self.dim)]
        if self.dim == 1:
            return (axes[0],)
        return tuple(np.meshgrid(*axes, indexing="ij"))

    @cached_property
    def laplacian_matrix(self) -> sp.csr_matrix:
        """Sparse mirror-ghost Neumann Laplacian on flattened fields."""
        mats = [
            _neumann_laplacian_1d(n, h) for n, h in zip(self.shape, self.spacings)
        ]
        if self.dim == 1:
            return mats[0].tocsr()
        ix = sp.identity(self.shape[0], format="csr")
        iy = sp.identity(self.shape[1], format="csr")
        return (sp.kron(mats[0], iy) + sp.kron(ix, mats[1])).tocsr()


def _neumann_laplacian_1d(n: int, h: float) -> sp.csr_matrix:
    main = np.full(n, -2.0)
    main[0] = main[-1] = -1.0
    off = np.ones(n - 1)
    return sp.diags([off, main, off], [-1, 0, 1], format="csr") / h**2


def make_grid(p: ModelParams, resolution: int | Sequence[int]) -> Grid:
    """Cell-centered uniform grid over the params' domain."""
    if isinstance(resolution, (int, np.integer)):
        shape = (int(resolution),) * p.dim
    else:
        shape = tuple(int(r) for r in resolution)
        if len(shape) != p.dim:
            raise OutOfRange("resolution", f"need {p.dim} entries (got {len(shape)})")
    return Grid(lengths=p.lengths, shape=shape)


@dataclass
class Field:
    """Scalar field on grid cells."""

    values: np.ndarray
    grid: Grid

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise OutOfRange(
                "field", f"values shape {self.values.shape} != grid shape {self.grid.shape}"
            )

    @classmethod
    def constant(cls, grid: Grid, value: float) -> "Field":
        return cls(np.full(grid.shape, float(value)), grid)

    @classmethod
    def from_function(cls, grid: Grid, fn: Callable[..., np.ndarray]) -> "Field":
        return cls(np.asarray(fn(*grid.coordinates), dtype=float), grid)

    def copy(self) -> "Field":
        return Field(self.values.copy(), self.grid)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.values)))


# ---------------------------------------------------------------------------
# discrete calculus on plain arrays
# ---------------------------------------------------------------------------


def integrate(values: np.ndarray, grid: Grid) -> float:
    """Midpoint rule: sum of cell values times cell volume."""
    return float(values.sum()) * grid.cell_volume


def face_gradients(values: np.ndarray, grid: Grid) -> list[np.ndarray]:
    """Interior-face normal gradients per axis (boundary faces carry zero flux)."""
    return [
        np.diff(values, axis=ax) / grid.spacings[ax] for ax in range(grid.dim)
    ]


def face_averages(values: np.ndarray, grid: Grid) -> list[np.ndarray]:
    """Arithmetic means on interior faces per axis."""
    out = []
    for ax in range(grid.dim):
        left = _take(values, slice(0, grid.shape[ax] - 1), ax)
        right = _take(values, slice(1, grid.shape[ax]), ax)
        out.append(0.5 * (left + right))
    return out


def face_divergence(fluxes: Sequence[np.ndarray], grid: Grid) -> np.ndarray:
    """Conservative divergence of interior-face fluxes with zero boundary flux.

    The cell sums of the result telescope to zero exactly, which is what makes
    the discrete mass law hold.
    """
    out = np.zeros(grid.shape)
    for ax, flux in enumerate(fluxes):
        shape = list(grid.shape)
        shape[ax] += 1
        padded = np.zeros(shape)
        interior = [slice(None)] * grid.dim
        interior[ax] = slice(1, grid.shape[ax])
        padded[tuple(interior)] = flux
        out += np.diff(padded, axis=ax) / grid.spacings[ax]
    return out


def laplacian_apply(values: np.ndarray, grid: Grid) -> np.ndarray:
    return face_divergence(face_gradients(values, grid), grid)


def cell_gradients(values: np.ndarray, grid: Grid) -> list[np.ndarray]:
    """Centered cell gradients with mirror ghosts (replicated edge values)."""
    out = []
    for ax in range(grid.dim):
        padded = np.concatenate(
            [
                _take(values, slice(0, 1), ax),
                values,
                _take(values, slice(grid.shape[ax] - 1, grid.shape[ax]), ax),
            ],
            axis=ax,
        )
        hi = _take(padded, slice(2, grid.shape[ax] + 2), ax)
        lo = _take(padded, slice(0, grid.shape[ax]), ax)
        out.append((hi - lo) / (2.0 * grid.spacings[ax]))
    return out


def gradient_inf_norm(values: np.ndarray, grid: Grid) -> float:
    """Max face-gradient magnitude; 0 on a constant field."""
    grads = face_gradients(values, grid)
    return max(float(np.max(np.abs(g))) for g in grads)


def _take(arr: np.ndarray, sl: slice, axis: int) -> np.ndarray:
    idx = [slice(None)] * arr.ndim
    idx[axis] = sl
    return arr[tuple(idx)]


# ---------------------------------------------------------------------------
# weighted operator assembly (Jacobians, linearized operators)
# ---------------------------------------------------------------------------


def _face_cell_pairs(grid: Grid, axis: int) -> tuple[np.ndarray, np.ndarray]:
    """Flat (left cell, right cell) index pairs of interior faces along axis."""
    idx = np.arange(grid.n_cells).reshape(grid.shape)
    left = _take(idx, slice(0, grid.shape[axis] - 1), axis).ravel()
    right = _take(idx, slice(1, grid.shape[axis]), axis).ravel()
    return left, right


def weighted_divgrad_matrix(face_weights: Sequence[np.ndarray], grid: Grid) -> sp.csr_matrix:
    """Matrix of x -> div(w * grad x) with per-face weights w and zero-flux faces.

    With unit weights this reproduces the mirror-ghost Laplacian.
    """
    rows, cols, vals = [], [], []
    for ax, w in enumerate(face_weights):
        left, right = _face_cell_pairs(grid, ax)
        wf = np.asarray(w).ravel() / grid.spacings[ax] ** 2
        rows.extend([left, left, right, right])
        cols.extend([right, left, right, left])
        vals.extend([wf, -wf, -wf, wf])
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    n = grid.n_cells
    return sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()


def face_average_div_matrix(face_gradients_v: Sequence[np.ndarray], grid: Grid) -> sp.csr_matrix:
    """Matrix of x -> div(avg(x) * G) for fixed face values G of grad v.

    This is the linearization of the chemotaxis divergence with respect to the
    transported density.
    """
    rows, cols, vals = [], [], []
    for ax, g in enumerate(face_gradients_v):
        left, right = _face_cell_pairs(grid, ax)
        gf = np.asarray(g).ravel() / (2.0 * grid.spacings[ax])
        rows.extend([left, left, right, right])
        cols.extend([left, right, left, right])
        vals.extend([gf, gf, -gf, -gf])
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    n = grid.n_cells
    return sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()


def write_snapshot_csv(path, u: Field, v: Field) -> None:
    """Snapshot file: header then rows x,u,v (1D) or x,y,u,v (2D), 17 digits."""
    grid = u.grid
    coords = grid.coordinates
    with open(path, "w", encoding="utf-8") as fh:
        if grid.dim == 1:
            fh.write("x,u,v\n")
            for x, uu, vv in zip(coords[0], u.values, v.values):
                fh.write(f"{x:.17g},{uu:.17g},{vv:.17g}\n")
        else:
            fh.write("x,y,u,v\n")
            X, Y = coords
            for x, y, uu, vv in zip(
                X.ravel(), Y.ravel(), u.values.ravel(), v.values.ravel()
            ):
                fh.write(f"{x:.17g},{y:.17g},{uu:.17g},{vv:.17g}\n")
