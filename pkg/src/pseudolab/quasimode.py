"""Localised quasimodes ``f(x) = exp(i gamma x / h) phi((x - c) / h^p)``.

For ``lam = V(c) + gamma^2`` the residual ``||(H - lam) f|| / ||f||`` tends
to zero as ``h -> 0``, so ``1 / residual`` is a certified lower bound for
the resolvent norm at ``lam``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import simpson

from .discretize import Grid, OperatorMatrix
from .potential import Potential, chebyshev_nodes

OSCILLATION_POINTS = 101


class SupportError(ValueError):
    pass


def bump(s) -> np.ndarray:
    """The standard mollifier ``exp(-1 / (1 - s^2))`` on ``|s| < 1``."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inside = np.abs(s) < 1
    out[inside] = np.exp(-1.0 / (1.0 - s[inside] ** 2))
    return out


def _bump_derivatives(s):
    s = np.asarray(s, dtype=float)
    phi = bump(s)
    d1 = np.zeros_like(s)
    d2 = np.zeros_like(s)
    m = np.abs(s) < 1
    w = 1.0 - s[m] ** 2
    g1 = -2.0 * s[m] / w ** 2
    g2 = -2.0 / w ** 2 - 8.0 * s[m] ** 2 / w ** 3
    d1[m] = g1 * phi[m]
    d2[m] = (g2 + g1 ** 2) * phi[m]
    return phi, d1, d2


@dataclass(frozen=True)
class BumpFunction:
    norm: float
    norm_d1: float
    norm_d2: float

    def __call__(self, s):
        return bump(s)

    @property
    def k1(self) -> float:
        return self.norm_d2 / self.norm

    def k2(self, gamma: float) -> float:
        return 2.0 * abs(gamma) * self.norm_d1 / self.norm


@lru_cache(maxsize=1)
def standard_bump(panels: int = 100_000) -> BumpFunction:
    """L2 norms of the mollifier and its derivatives by Simpson quadrature."""
    s = np.linspace(-1.0, 1.0, panels + 1)
    phi, d1, d2 = _bump_derivatives(s)
    n0, n1, n2 = (float(np.sqrt(simpson(f * f, x=s))) for f in (phi, d1, d2))
    return BumpFunction(n0, n1, n2)


@dataclass(frozen=True, eq=False)
class Quasimode:
    c: float
    gamma: float
    p: float
    h: float
    lam: complex
    x: np.ndarray
    values: np.ndarray
    mismatch: float = 0.0

    @property
    def radius(self) -> float:
        return self.h ** self.p


def _piece_containing(V: Potential, c: float) -> int:
    j = int(V.piece_index(c))
    return j


def build_quasimode(V: Potential, c: float, gamma: float, p: float, h: float,
                    grid: Grid, lam: complex | None = None, mismatch: float = 0.0) -> Quasimode:
    """Sample the quasimode centred at ``c`` with momentum ``gamma``."""
    if not 0 < p < 1:
        raise ValueError("p must lie in (0, 1)")
    if h <= 0:
        raise ValueError("h must be positive")
    r = h ** p
    piece = V.pieces[_piece_containing(V, c)]
    if not (piece.lo < c - r and c + r < piece.hi):
        raise SupportError(
            f"support ({c - r:.6g}, {c + r:.6g}) touches a partition point or the boundary; "
            "decrease h or move c"
        )
    x = grid.nodes
    values = np.exp(1j * gamma * x / h) * bump((x - c) / r)
    if lam is None:
        lam = complex(piece(np.array([c]))[0]) + gamma * gamma
    return Quasimode(float(c), float(gamma), float(p), float(h), complex(lam), x, values, float(mismatch))


def choose_center(V: Potential, lam: complex, radius: float = 0.0, samples_per_piece: int = 2048):
    """Pick ``(c, gamma, mismatch)`` so that ``V(c) + gamma^2`` approximates ``lam``.

    Among samples with ``Re(lam - V(c)) >= -1e-12`` (and at least ``radius``
    away from piece ends) take the one minimising ``|Im(lam - V(c))|``.
    """
    best = None
    for piece in V.pieces:
        xs = chebyshev_nodes(piece.lo, piece.hi, samples_per_piece, V.b - V.a)
        xs = xs[(xs - radius > piece.lo) & (xs + radius < piece.hi)]
        if xs.size == 0:
            continue
        d = lam - piece(xs)
        ok = d.real >= -1e-12
        if not np.any(ok):
            continue
        k = int(np.argmin(np.where(ok, np.abs(d.imag), np.inf)))
        cand = (abs(d[k].imag), float(xs[k]), float(np.sqrt(max(d[k].real, 0.0))))
        if best is None or cand[0] < best[0]:
            best = cand
    if best is None:
        raise ValueError(f"{lam} is not reachable as V(c) + gamma^2 on this potential")
    mismatch, c, gamma = best
    return c, gamma, mismatch


def quasimode_for(V: Potential, lam: complex, p: float, h: float, grid: Grid) -> Quasimode:
    c, gamma, mismatch = choose_center(V, lam, h ** p)
    return build_quasimode(V, c, gamma, p, h, grid, lam=lam, mismatch=mismatch)


def residual_ratio(A: OperatorMatrix, q: Quasimode) -> float:
    """``||(A - lam) f|| / ||f||`` in the discrete 2-norm."""
    if A.dim != q.values.size or not np.allclose(A.x, q.x):
        raise ValueError("operator and quasimode live on different grids")
    nf = np.linalg.norm(q.values)
    if nf == 0.0:
        raise SupportError("quasimode vanishes on the grid; refine the grid")
    r = A.matvec(q.values) - q.lam * q.values
    return float(np.linalg.norm(r) / nf)


def oscillation(V: Potential, q: Quasimode) -> float:
    xs = np.linspace(q.c - q.radius, q.c + q.radius, OSCILLATION_POINTS)
    j = _piece_containing(V, q.c)
    vals = V.one_sided(j, xs)
    vc = V.one_sided(j, np.array([q.c]))[0]
    return float(np.max(np.abs(vals - vc)))


def residual_bound(V: Potential, q: Quasimode, bump_fn: BumpFunction | None = None) -> float:
    """``k1 h^(2-2p) + k2 h^(1-p) + sup |V - V(c)|`` over the support."""
    b = bump_fn or standard_bump()
    h, p = q.h, q.p
    return b.k1 * h ** (2 - 2 * p) + b.k2(q.gamma) * h ** (1 - p) + oscillation(V, q) + q.mismatch


def closure_lower_bound(certified: float, delta: float) -> float:
    """Lower bound for ``||R(w)||`` when ``||R(lam)|| >= certified`` and ``|w - lam| <= delta``.

    From ``||R(lam)|| <= ||R(w)|| (1 + |lam - w| ||R(lam)||)`` and the fact
    that ``t / (1 + delta t)`` increases in ``t``.
    """
    return certified / (1.0 + delta * certified)


@dataclass(frozen=True)
class SweepRow:
    h: float
    ratio: float
    bound: float
    lower_bound_resolvent: float
    n_interior: int


def blowup_sweep(V: Potential, lam: complex, hs, p: float = 0.5,
                 max_dx=lambda h: h * h, min_nodes: int = 400) -> list[SweepRow]:
    """Residual ratios and bounds over ``hs`` with ``dx <= max_dx(h)``."""
    from .discretize import assemble

    rows = []
    for h in hs:
        dx = max_dx(h)
        n = max(min_nodes, int(np.ceil((V.b - V.a) / dx)) - 1)
        grid = Grid.for_potential(V, n)
        q = quasimode_for(V, lam, p, h, grid)
        A = assemble(V, h, grid)
        ratio = residual_ratio(A, q)
        rows.append(SweepRow(float(h), ratio, residual_bound(V, q), 1.0 / ratio, grid.n_interior))
    return rows


def write_sweep_csv(rows, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("h,ratio,bound,lower_bound_resolvent\n")
        for r in rows:
            fh.write(f"{float(r.h)!r},{float(r.ratio)!r},{float(r.bound)!r},{float(r.lower_bound_resolvent)!r}\n")
