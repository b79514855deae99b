"""The twisting trick in one dimension.

``H1 = diag(-h^2 D2 + V, -h^2 D2 + m)`` is conjugated by the pointwise
rotation ``U`` through the angle ``theta((x - c) / h^g)``; the result equals
``H2 = diag(-h^2 D2 + V1, -h^2 D2 + V2)`` plus a first-order drift, a
constant ``Q`` on the transition zone and the potential term ``G``.

Vectors on the doubled space are stored as ``[first copy; second copy]``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.fft import dst, idst

from .discretize import Grid, free_laplacian
from .linalg import loglog_slope, multiplier_norm, spectral_norm
from .potential import PhiRegion, Potential

MIN_ZONE_NODES = 32
M_DOUBLINGS = 8


def theta(s) -> np.ndarray:
    """``pi/2`` for ``s <= -1/3``, ``0`` for ``s >= 1/3``, linear in between."""
    s = np.asarray(s, dtype=float)
    return np.where(s <= -1 / 3, np.pi / 2, np.where(s >= 1 / 3, 0.0, np.pi * (1 - 3 * s) / 4))


def zone_nodes(h: float, g_exp: float, a: float, b: float, min_nodes: int = MIN_ZONE_NODES) -> int:
    """Interior node count putting at least ``min_nodes`` nodes in the transition zone."""
    width = 2 * h ** g_exp / 3
    return int(math.ceil((b - a) * (min_nodes + 1) / width))


@dataclass(frozen=True)
class TwistConfig:
    V: Potential
    c: float
    m: float
    g_exp: float
    h: float
    grid: Grid

    def __post_init__(self):
        if not 0 < self.g_exp < 1:
            raise ValueError("g_exp must lie in (0, 1)")
        if self.h <= 0:
            raise ValueError("h must be positive")
        r = self.h ** self.g_exp / 3
        if not (self.V.a < self.c - r and self.c + r < self.V.b):
            raise ValueError("transition zone does not fit inside the interval")
        if len(self.V.partition):
            raise ValueError("the twist needs V continuous on the closed interval")

    @property
    def zone_radius(self) -> float:
        return self.h ** self.g_exp / 3

    @property
    def in_zone(self) -> np.ndarray:
        return np.abs(self.grid.nodes - self.c) < self.zone_radius

    def with_h(self, h: float, n_interior: int | None = None) -> "TwistConfig":
        n = n_interior or max(self.grid.n_interior, zone_nodes(h, self.g_exp, self.V.a, self.V.b))
        return TwistConfig(self.V, self.c, self.m, self.g_exp, h, Grid(self.V.a, self.V.b, n))

    def refined(self) -> "TwistConfig":
        """Same problem with ``dx`` halved (nodes of the coarse grid are kept)."""
        g = self.grid
        return TwistConfig(self.V, self.c, self.m, self.g_exp, self.h, Grid(g.a, g.b, 2 * g.n_interior + 1))


def flattened(V: Potential, x, c: float, m: float):
    """``(V1, V2)`` at the nodes: ``V`` right (resp. left) of ``c``, ``m`` elsewhere."""
    v = V(x)
    right = x > c
    return np.where(right, v, m), np.where(right, m, v)


def choose_m(V: Potential, lam: complex, c: float, grid: Grid) -> float:
    """``max Re V + |lam| + 1``, doubled until ``lam`` avoids both flattened hulls."""
    x = grid.nodes
    m = max(float(np.max(V(x).real)) + abs(lam) + 1.0, 1.0)
    for _ in range(M_DOUBLINGS + 1):
        v1, v2 = flattened(V, x, c, m)
        if all(PhiRegion.from_samples(v).dist_to_conv_phi(lam) > 0 for v in (v1, v2)):
            return m
        m *= 2
    raise ValueError(f"no m up to {m} separates {lam} from the flattened potentials")


def make_config(V: Potential, h: float, lam: complex, c: float = 0.0, g_exp: float = 2 / 3,
                n_interior: int | None = None, m: float | None = None) -> TwistConfig:
    n = n_interior or max(400, zone_nodes(h, g_exp, V.a, V.b))
    grid = Grid(V.a, V.b, n)
    if m is None:
        m = choose_m(V, lam, c, grid)
    return TwistConfig(V, c, float(m), g_exp, h, grid)


# ----------------------------------------------------------------- assembly


@dataclass(frozen=True, eq=False)
class TwistSystem:
    cfg: TwistConfig
    H1: sp.csc_matrix
    H2: sp.csc_matrix
    U: sp.csc_matrix
    drift: sp.csc_matrix  # discrete P_h D
    Q: sp.csc_matrix
    G: sp.csc_matrix
    L0: sp.csc_matrix  # -h^2 D2 on both copies
    D: sp.csc_matrix  # central difference on both copies
    p_mult: np.ndarray  # P_h coefficient at the nodes
    q_mult: np.ndarray
    g_blocks: np.ndarray  # (n, 2, 2)
    v1: np.ndarray
    v2: np.ndarray

    @property
    def conjugated(self) -> sp.csc_matrix:
        return (self.U @ self.H1 @ self.U.T).tocsc()

    @property
    def corrected(self) -> sp.csc_matrix:
        return (self.H2 + self.drift + self.Q + self.G).tocsc()

    @property
    def norm_P(self) -> float:
        return float(np.max(np.abs(self.p_mult)))

    @property
    def norm_Q(self) -> float:
        return float(np.max(np.abs(self.q_mult)))

    @property
    def norm_G(self) -> float:
        return multiplier_norm(self.g_blocks)


def _blocks(a, b, c, d) -> sp.csc_matrix:
    return sp.bmat([[a, b], [c, d]], format="csc")


def assemble_twist(cfg: TwistConfig) -> TwistSystem:
    g = cfg.grid
    x = g.nodes
    n = g.n_interior
    if int(np.count_nonzero(cfg.in_zone)) < MIN_ZONE_NODES:
        raise ValueError(f"transition zone has fewer than {MIN_ZONE_NODES} nodes; refine the grid")
    h, dx = cfg.h, g.dx
    lap = free_laplacian(h, g)
    L = sp.diags([lap.lower, lap.diag, lap.upper], [-1, 0, 1], format="csc")
    v = cfg.V(x)
    v1, v2 = flattened(cfg.V, x, cfg.c, cfg.m)
    Z = sp.csc_matrix((n, n), dtype=complex)
    H1 = _blocks(L + sp.diags(v), Z, Z, L + cfg.m * sp.identity(n))
    H2 = _blocks(L + sp.diags(v1), Z, Z, L + sp.diags(v2))

    th = theta((x - cfg.c) / h ** cfg.g_exp)
    C, S = np.cos(th), np.sin(th)
    U = _blocks(sp.diags(C), sp.diags(S), sp.diags(-S), sp.diags(C))

    # Conjugating -h^2 D2 by the rotation leaves, at second order in dx, the
    # drift p (J d/dx) with p = 2 h^2 theta' and J = [[0, 1], [-1, 0]], plus
    # h^2 theta'^2.  Both are discretised at the half nodes so the identity
    # below is exact up to O(dx^2) in the graph norm of the Laplacian.
    thb = np.concatenate(([theta((g.a - cfg.c) / h ** cfg.g_exp)], th, [theta((g.b - cfg.c) / h ** cfg.g_exp)]))
    slope = np.diff(thb) / dx  # theta' at the n + 1 half nodes
    p_half = 2 * h * h * slope[1:-1]
    up = p_half / (2 * dx)
    Dj = sp.diags([-up, up], [-1, 1], shape=(n, n), format="csc")
    drift = _blocks(Z, Dj, -Dj, Z)
    q_mult = h * h * 0.5 * (slope[:-1] ** 2 + slope[1:] ** 2)
    Q = sp.diags(np.concatenate([q_mult, q_mult]), format="csc")
    p_mult = 2 * h * h * _theta_prime(x, cfg)

    right = x > cfg.c
    left = ~right
    w = cfg.m - v
    gd = w * (right * S ** 2 - left * C ** 2)
    go = w * C * S
    G = _blocks(sp.diags(gd), sp.diags(go), sp.diags(go), sp.diags(-gd))
    g_blocks = np.stack([np.stack([gd, go], -1), np.stack([go, -gd], -1)], -2)

    D1 = sp.diags([-0.5 / dx, 0.5 / dx], [-1, 1], shape=(n, n), format="csc")
    return TwistSystem(
        cfg, H1, H2, U, drift, Q.astype(complex), G, _blocks(L, Z, Z, L), _blocks(D1, Z, Z, D1),
        p_mult, q_mult, g_blocks, v1, v2,
    )


def _theta_prime(x, cfg: TwistConfig) -> np.ndarray:
    s = (x - cfg.c) / cfg.h ** cfg.g_exp
    return np.where(np.abs(s) < 1 / 3, -3 * np.pi / 4 / cfg.h ** cfg.g_exp, 0.0)


# ------------------------------------------------------------ verification


def _solver(M: sp.spmatrix):
    lu = spla.splu(sp.csc_matrix(M, dtype=complex))
    return lu


def _resolvent_op(M, lam):
    n = M.shape[0]
    lu = _solver(M - lam * sp.identity(n, format="csc"))
    return spla.LinearOperator((n, n), matvec=lu.solve, rmatvec=lambda y: lu.solve(y, trans="H"),
                               dtype=complex)


def _op(A):
    return spla.aslinearoperator(A)


def _laplacian_power(n: int, c: float, power: float):
    """``v -> (1 + L)^power v`` for ``L = c tridiag(-1, 2, -1)`` by the sine transform."""
    mu = c * (2 - 2 * np.cos(np.arange(1, n + 1) * np.pi / (n + 1)))
    w = (1 + mu) ** power

    def apply(v):
        v = np.asarray(v).reshape(2, n)
        return idst(w * dst(v, type=1, norm="ortho", axis=1), type=1, norm="ortho", axis=1).ravel()

    return apply


def verify_conjugation(sys: TwistSystem, omit_corrections: bool = False, measure: str = "form") -> float:
    """Size of ``E = U H1 U^* - (H2 + P D + Q + G)``.

    ``measure``:
      ``"form"``  ``||(1 + L0)^-1/2 E (1 + L0)^-1/2||`` (default),
      ``"graph"`` ``||E (1 + L0)^-1||``,
      ``"plain"`` ``||E||``.
    The plain norm keeps second differences of ``theta`` that do not vanish
    as ``dx -> 0``.  The kinks of ``theta`` at the zone edges leave a term of
    the form ``dx (theta'^2 f')'`` which is second order in the form sense but
    only order 3/2 in the graph norm.
    """
    T = sys.conjugated
    rhs = sys.H2 if omit_corrections else sys.corrected
    E = (T - rhs).tocsc()
    if measure == "plain":
        return spectral_norm(E)
    n = sys.cfg.grid.n_interior
    c = sys.cfg.h ** 2 / sys.cfg.grid.dx ** 2
    if measure == "form":
        M = _laplacian_power(n, c, -0.5)
        op = spla.LinearOperator((2 * n, 2 * n), matvec=lambda v: M(E @ M(v)),
                                 rmatvec=lambda y: M(E.conj().T @ M(y)), dtype=complex)
    elif measure == "graph":
        M = _laplacian_power(n, c, -1.0)
        op = spla.LinearOperator((2 * n, 2 * n), matvec=lambda v: E @ M(v),
                                 rmatvec=lambda y: M(E.conj().T @ y), dtype=complex)
    else:
        raise ValueError(f"unknown measure {measure!r}")
    return spectral_norm(op)


def conjugation_refinement(cfg: TwistConfig, measure: str = "form") -> tuple[float, float]:
    """Residuals at ``dx`` and ``dx / 2``."""
    return (verify_conjugation(assemble_twist(cfg), measure=measure),
            verify_conjugation(assemble_twist(cfg.refined()), measure=measure))


@dataclass(frozen=True)
class ResolventComparison:
    h: float
    norm_P: float
    norm_Q: float
    norm_G: float
    res_diff: float
    bound_rhs: float
    norm_R1: float
    norm_R2: float
    beta: float
    drift_term: float
    residual_term: float
    h2_hull_bound: float


def resolvent_difference(sys: TwistSystem, lam: complex) -> ResolventComparison:
    """``||(U H1 U^* - lam)^-1 - (H2 - lam)^-1||`` and the terms of its bound.

    ``R1 - R2 = R2 (H2 - T) R1`` with ``T - H2 = drift + Q + G + E``, so
    ``||R1 - R2|| <= ||R2|| (||drift R1|| + (||Q|| + ||G||) ||R1|| + ||E R1||)``.
    ``beta = ||D R1||`` is reported alongside.
    """
    T = sys.conjugated
    R1 = _resolvent_op(T, lam)
    R2 = _resolvent_op(sys.H2, lam)
    diff = spla.LinearOperator(R1.shape, matvec=lambda v: R1.matvec(v) - R2.matvec(v),
                               rmatvec=lambda y: R1.rmatvec(y) - R2.rmatvec(y), dtype=complex)
    E = (T - sys.corrected).tocsc()
    nr1 = spectral_norm(R1)
    nr2 = spectral_norm(R2)
    drift_term = spectral_norm(_op(sys.drift) @ R1)
    residual_term = spectral_norm(_op(E) @ R1)
    beta = spectral_norm(_op(sys.D) @ R1)
    bound = nr2 * (drift_term + (sys.norm_Q + sys.norm_G) * nr1 + residual_term)
    hull = max(1.0 / PhiRegion.from_samples(v).dist_to_conv_phi(lam) for v in (sys.v1, sys.v2))
    return ResolventComparison(
        sys.cfg.h, sys.norm_P, sys.norm_Q, sys.norm_G, spectral_norm(diff), bound,
        nr1, nr2, beta, drift_term, residual_term, hull,
    )


def twist_sweep(V: Potential, lam: complex, hs, c: float = 0.0, g_exp: float = 2 / 3,
                m: float | None = None) -> list[ResolventComparison]:
    rows = []
    for h in hs:
        cfg = make_config(V, h, lam, c, g_exp, m=m)
        try:
            rows.append(resolvent_difference(assemble_twist(cfg), lam))
        except RuntimeError as exc:  # singular factorisation: lam is an eigenvalue
            warnings.warn(f"h={h} dropped: {exc}", RuntimeWarning, stacklevel=2)
    return rows


def scaling_exponents(rows) -> dict[str, float]:
    if len(rows) < 3:
        raise ValueError("fitting exponents needs at least three values of h")
    hs = [r.h for r in rows]
    return {
        "P": loglog_slope(hs, [r.norm_P for r in rows]),
        "Q": loglog_slope(hs, [r.norm_Q for r in rows]),
        "G": loglog_slope(hs, [r.norm_G for r in rows]),
        "res_diff": loglog_slope(hs, [r.res_diff for r in rows]),
    }


def write_twist_csv(rows, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("h,norm_P,norm_Q,norm_G,res_diff,bound_rhs\n")
        for r in rows:
            fh.write(f"{float(r.h)!r},{float(r.norm_P)!r},{float(r.norm_Q)!r},{float(r.norm_G)!r},{float(r.res_diff)!r},{float(r.bound_rhs)!r}\n")
