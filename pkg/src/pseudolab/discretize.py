"""Finite-difference discretisation of ``-h^2 d^2/dx^2 + V`` with Dirichlet ends.

Matrices are kept in tridiagonal form (diagonal plus the two off-diagonals)
and densified on demand.  Interior Dirichlet conditions delete the rows and
columns of the affected nodes, which decouples the matrix into blocks.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .potential import Potential

NODE_TOL = 1e-12


@dataclass(frozen=True)
class Grid:
    a: float
    b: float
    n_interior: int

    def __post_init__(self):
        if not self.b > self.a or self.n_interior < 1:
            raise ValueError("grid needs a < b and at least one interior node")

    @property
    def dx(self) -> float:
        return (self.b - self.a) / (self.n_interior + 1)

    @property
    def nodes(self) -> np.ndarray:
        return self.a + self.dx * np.arange(1, self.n_interior + 1)

    @classmethod
    def for_potential(cls, V: Potential, n_interior: int) -> "Grid":
        """Grid on V's interval, bumping ``n`` until no node hits a partition point."""
        n = n_interior
        while True:
            g = cls(V.a, V.b, n)
            if not _hits(g.nodes, V.partition, g.dx):
                return g
            n += 1

    @classmethod
    def with_spacing(cls, V: Potential, dx_max: float) -> "Grid":
        n = int(np.ceil((V.b - V.a) / dx_max)) - 1
        return cls.for_potential(V, max(n, 1))


def _hits(nodes, points, dx) -> bool:
    if len(points) == 0:
        return False
    d = np.abs(nodes[:, None] - np.asarray(points)[None, :])
    return bool(np.any(d <= NODE_TOL * max(1.0, dx)))


@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    """Tridiagonal complex matrix; ``upper[j]`` couples rows ``j`` and ``j+1``."""

    diag: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    h: float
    grid: Grid
    x: np.ndarray
    interior_dirichlet: tuple[int, ...] = ()
    k_lower: float = -np.inf
    meta: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return len(self.diag)

    @cached_property
    def entries(self) -> np.ndarray:
        A = np.diag(self.diag.astype(complex))
        if self.dim > 1:
            A[np.arange(self.dim - 1), np.arange(1, self.dim)] = self.upper
            A[np.arange(1, self.dim), np.arange(self.dim - 1)] = self.lower
        return A

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)

    def matvec(self, v) -> np.ndarray:
        v = np.asarray(v)
        out = self.diag * v
        out[:-1] += self.upper * v[1:]
        out[1:] += self.lower * v[:-1]
        return out

    def blocks(self) -> list[slice]:
        """Index ranges of the decoupled diagonal blocks."""
        cuts = np.flatnonzero((self.upper == 0) & (self.lower == 0)) + 1
        edges = [0, *cuts.tolist(), self.dim]
        return [slice(lo, hi) for lo, hi in zip(edges, edges[1:])]

    def block(self, s: slice) -> "OperatorMatrix":
        return OperatorMatrix(
            self.diag[s], self.lower[s.start:s.stop - 1], self.upper[s.start:s.stop - 1],
            self.h, self.grid, self.x[s], (), self.k_lower,
        )

    def hermitian_min_eig(self) -> float:
        A = self.entries
        return float(np.linalg.eigvalsh(0.5 * (A + A.conj().T))[0])

    def is_tridiagonal(self) -> bool:
        A = self.entries
        band = np.abs(np.subtract.outer(np.arange(self.dim), np.arange(self.dim))) <= 1
        return bool(np.all(A[~band] == 0))

    def dump(self, path) -> None:
        """Plain-text dump: header ``dim h dx a b`` then rows of ``re im`` pairs."""
        A = self.entries
        g = self.grid
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(f"{self.dim} {float(self.h)!r} {float(g.dx)!r} {float(g.a)!r} {float(g.b)!r}\n")
            for row in A:
                fh.write(" ".join(f"{float(z.real)!r} {float(z.imag)!r}" for z in row))
                fh.write("\n")


def load_matrix(path):
    """Read a matrix dump; returns ``(A, header)``."""
    with open(path, encoding="utf-8") as fh:
        head = fh.readline().split()
        dim = int(head[0])
        rows = [np.array(line.split(), dtype=float) for line in fh if line.strip()]
    data = np.array(rows).reshape(dim, dim, 2)
    header = dict(dim=dim, h=float(head[1]), dx=float(head[2]), a=float(head[3]), b=float(head[4]))
    return data[..., 0] + 1j * data[..., 1], header


def assemble_values(values, h: float, grid: Grid, k_lower: float = -np.inf) -> OperatorMatrix:
    """Tridiagonal matrix for a potential already sampled at the grid nodes."""
    if h <= 0:
        raise ValueError("h must be positive")
    n = grid.n_interior
    values = np.asarray(values, dtype=complex)
    if values.shape != (n,):
        raise ValueError("potential samples do not match the grid")
    c = h * h / grid.dx ** 2
    off = np.full(n - 1, -c, dtype=complex)
    return OperatorMatrix(2 * c + values, off, off.copy(), float(h), grid, grid.nodes, (), k_lower)


def assemble(V: Potential, h: float, grid: Grid) -> OperatorMatrix:
    """Central-difference discretisation of ``-h^2 d^2/dx^2 + V`` on ``grid``."""
    if grid.a < V.a - NODE_TOL or grid.b > V.b + NODE_TOL:
        raise ValueError("grid extends outside the potential's interval")
    if _hits(grid.nodes, V.partition, grid.dx):
        raise ValueError(
            "a grid node coincides with a partition point of V; "
            "offset the grid (e.g. Grid.for_potential) so V is unambiguous"
        )
    A = assemble_values(V(grid.nodes), h, grid, V.k_lower)
    A.meta["source"] = V.source
    return A


def snap_cuts(grid: Grid, cuts) -> list[int]:
    idx = []
    for c in cuts:
        if not grid.a < c < grid.b:
            raise ValueError(f"cut {c} is not strictly inside ({grid.a}, {grid.b})")
        j = int(np.clip(np.rint((c - grid.a) / grid.dx) - 1, 0, grid.n_interior - 1))
        if j in idx:
            raise ValueError(f"two cuts snap to the same node {j}")
        idx.append(j)
    return sorted(idx)


def assemble_split(V: Potential, h: float, grid: Grid, cuts) -> OperatorMatrix:
    """As ``assemble`` with extra Dirichlet conditions at the nodes nearest ``cuts``.

    The snapped nodes are removed; couplings across a removed node vanish,
    so the result is block diagonal with one block per sub-interval.
    """
    A = assemble(V, h, grid)
    drop = snap_cuts(grid, cuts)
    if not drop:
        return A
    keep = np.setdiff1d(np.arange(grid.n_interior), drop)
    # coupling between consecutive kept nodes survives only if they are adjacent
    adjacent = np.diff(keep) == 1
    upper = np.where(adjacent, A.upper[keep[:-1]], 0)
    lower = np.where(adjacent, A.lower[keep[:-1]], 0)
    out = OperatorMatrix(
        A.diag[keep], lower.astype(complex), upper.astype(complex), A.h, grid,
        A.x[keep], tuple(drop), A.k_lower,
    )
    out.meta.update(A.meta)
    return out


def free_laplacian(h: float, grid: Grid) -> OperatorMatrix:
    return assemble_values(np.zeros(grid.n_interior), h, grid, 0.0)


def central_difference(grid: Grid) -> np.ndarray:
    """Dense central-difference first derivative with Dirichlet truncation."""
    n = grid.n_interior
    D = np.zeros((n, n))
    i = np.arange(n - 1)
    D[i, i + 1] = 0.5 / grid.dx
    D[i + 1, i] = -0.5 / grid.dx
    return D
