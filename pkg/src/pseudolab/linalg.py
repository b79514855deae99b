"""Dense complex linear algebra: LU, resolvent norms, spectral norms, maps.

The resolvent norm ``||(A - lam)^{-1}||`` is ``1 / sigma_min(A - lam)``.
It is computed by inverse iteration on ``(A - lam)^H (A - lam)`` driven by a
single LU factorisation per ``lam``.
"""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla
from scipy.linalg import lapack

SINGULAR_RTOL = 1e-14
DEFAULT_SEED = 20240607


class ConvergenceWarning(RuntimeWarning):
    pass


def _dense(A) -> np.ndarray:
    return np.asarray(A.entries if hasattr(A, "entries") else A)


@dataclass(frozen=True, eq=False)
class LuFactors:
    lu: np.ndarray
    piv: np.ndarray
    singular: bool
    rcond: float

    @property
    def n(self) -> int:
        return self.lu.shape[0]

    @property
    def perm(self) -> np.ndarray:
        """Row permutation ``p`` with ``A[p] = L @ U``."""
        p = np.arange(self.n)
        for i, j in enumerate(self.piv):
            p[i], p[j] = p[j], p[i]
        return p

    @property
    def L(self) -> np.ndarray:
        return np.tril(self.lu, -1) + np.eye(self.n)

    @property
    def U(self) -> np.ndarray:
        return np.triu(self.lu)

    def solve(self, b) -> np.ndarray:
        return sla.lu_solve((self.lu, self.piv), b, check_finite=False)

    def solve_adjoint(self, b) -> np.ndarray:
        """Solve ``A^H x = b``."""
        return sla.lu_solve((self.lu, self.piv), b, trans=2, check_finite=False)


def lu_factor(A) -> LuFactors:
    """Partial-pivoting LU.  Singularity is flagged, never raised."""
    A = np.asarray(_dense(A), dtype=complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("lu_factor needs a square matrix")
    scale = float(np.max(np.abs(A))) if A.size else 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu, piv = sla.lu_factor(A, check_finite=False)
    pivots = np.abs(np.diag(lu))
    singular = scale == 0.0 or bool(np.min(pivots) < SINGULAR_RTOL * scale)
    if singular:
        rcond = 0.0
    else:
        anorm = float(np.max(np.sum(np.abs(A), axis=0)))
        rcond, _ = lapack.zgecon(lu, anorm, norm="1")
    return LuFactors(lu, piv, singular, float(rcond))


def _start_vector(n: int, seed: int, k: int = 1) -> np.ndarray:
    rng = np.random.default_rng(seed)
    v = rng.standard_normal((k, n)) + 1j * rng.standard_normal((k, n))
    v = v.T
    if k == 1:
        return v[:, 0] / np.linalg.norm(v)
    return np.linalg.qr(v)[0]


@dataclass(frozen=True)
class ResolventEstimate:
    norm: float
    iterations: int
    converged: bool
    singular: bool = False

    @property
    def sigma_min(self) -> float:
        return 0.0 if self.singular else 1.0 / self.norm


BLOCK_RETRY = 8


def _block_iteration(F: LuFactors, n: int, k: int, tol: float, maxiter: int, seed: int):
    # subspace inverse iteration with Rayleigh-Ritz; helps when the smallest
    # singular values cluster and the single-vector rate stalls
    X = _start_vector(n, seed, k)
    mu = 0.0
    for it in range(1, maxiter + 1):
        Y = F.solve(X)
        mu_new = float(np.linalg.eigvalsh(Y.conj().T @ Y)[-1])
        Z = F.solve_adjoint(Y)
        if not np.all(np.isfinite(Z)):
            return math.inf, it, True
        X = np.linalg.qr(Z)[0]
        if abs(mu_new - mu) < tol * mu_new:
            return mu_new, it, True
        mu = mu_new
    return mu, maxiter, False


def resolvent_estimate(A, lam, tol: float = 1e-13, maxiter: int = 500,
                       seed: int = DEFAULT_SEED) -> ResolventEstimate:
    """Inverse iteration for ``||(A - lam)^{-1}||`` through one LU.

    A single vector is tried first; if it stalls, the same LU drives a block
    iteration on ``BLOCK_RETRY`` vectors.
    """
    if not 0 < tol < 1:
        raise ValueError("tol must lie in (0, 1)")
    M = np.array(_dense(A), dtype=complex)
    M[np.diag_indices_from(M)] -= lam
    F = lu_factor(M)
    if F.singular:
        return ResolventEstimate(math.inf, 0, True, True)
    n = M.shape[0]
    x = _start_vector(n, seed)
    mu = 0.0
    for it in range(1, maxiter + 1):
        y = F.solve(x)
        z = F.solve_adjoint(y)
        # Rayleigh quotient of (M^H M)^{-1} at the unit vector x
        mu_new = float(np.vdot(y, y).real)
        nz = np.linalg.norm(z)
        if not np.isfinite(nz) or nz == 0.0:
            return ResolventEstimate(math.inf, it, True, True)
        x = z / nz
        if abs(mu_new - mu) < tol * mu_new:
            return ResolventEstimate(math.sqrt(mu_new), it, True)
        mu = mu_new
    k = min(BLOCK_RETRY, n)
    if k < 2:
        return ResolventEstimate(math.sqrt(mu), maxiter, False)
    mu_b, its, ok = _block_iteration(F, n, k, tol, maxiter, seed)
    if mu_b == math.inf:
        return ResolventEstimate(math.inf, maxiter + its, True, True)
    return ResolventEstimate(math.sqrt(max(mu, mu_b)), maxiter + its, ok)


def resolvent_norm(A, lam, tol: float = 1e-13, maxiter: int = 500,
                   seed: int = DEFAULT_SEED) -> float:
    """``1 / sigma_min(A - lam I)``; ``inf`` when ``lam`` hits the spectrum.

    Block-diagonal operators (``A.blocks()`` with several blocks) are handled
    block by block; the norm is the largest block norm.
    """
    if hasattr(A, "blocks") and len(A.blocks()) > 1:
        return max(resolvent_norm(A.block(s), lam, tol, maxiter, seed) for s in A.blocks())
    est = resolvent_estimate(A, lam, tol, maxiter, seed)
    if not est.converged:
        warnings.warn(
            f"inverse iteration did not converge in {maxiter} steps at lam={lam}",
            ConvergenceWarning, stacklevel=2,
        )
    return est.norm


def spectral_norm(A, tol: float = 1e-10, maxiter: int = 20000, seed: int = DEFAULT_SEED,
                  full_output: bool = False):
    """Largest singular value by power iteration on ``A^H A``.

    ``A`` may be dense, sparse or a ``scipy.sparse.linalg.LinearOperator``
    (which must provide ``rmatvec``).
    """
    A = A.entries if hasattr(A, "entries") else A
    op = spla.aslinearoperator(A)
    n = op.shape[1]
    x = _start_vector(n, seed)
    nu = 0.0
    converged = False
    it = 0
    for it in range(1, maxiter + 1):
        y = op.matvec(x)
        nu_new = float(np.vdot(y, y).real)
        if nu_new == 0.0:
            converged = True
            nu = 0.0
            break
        z = op.rmatvec(y)
        x = z / np.linalg.norm(z)
        if abs(nu_new - nu) <= tol * nu_new:
            nu = nu_new
            converged = True
            break
        nu = nu_new
    if not converged:
        warnings.warn(f"power iteration did not converge in {maxiter} steps",
                      ConvergenceWarning, stacklevel=2)
    value = math.sqrt(nu)
    return (value, it, converged) if full_output else value


def loglog_slope(hs, values) -> float:
    """Least-squares slope of ``log(values)`` against ``log(hs)``."""
    hs = np.asarray(hs, dtype=float)
    values = np.asarray(values, dtype=float)
    if hs.size < 2:
        raise ValueError("a slope needs at least two points")
    return float(np.polyfit(np.log(hs), np.log(values), 1)[0])


def multiplier_norm(blocks) -> float:
    """Norm of a pointwise matrix multiplier given as an ``(n, k, k)`` array."""
    blocks = np.asarray(blocks)
    if blocks.ndim == 1:
        return float(np.max(np.abs(blocks)))
    return float(np.max(np.linalg.norm(blocks, ord=2, axis=(1, 2))))


# --------------------------------------------------------------- pseudospectra


@dataclass(frozen=True)
class LambdaGrid:
    re_min: float
    re_max: float
    im_min: float
    im_max: float
    nx: int
    ny: int

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1:
            raise ValueError("lambda grid needs at least one point")
        if self.re_max < self.re_min or self.im_max < self.im_min:
            raise ValueError("lambda grid bounds are inverted")

    @property
    def re(self) -> np.ndarray:
        return np.linspace(self.re_min, self.re_max, self.nx) if self.nx > 1 else np.array([self.re_min])

    @property
    def im(self) -> np.ndarray:
        return np.linspace(self.im_min, self.im_max, self.ny) if self.ny > 1 else np.array([self.im_min])

    def points(self) -> np.ndarray:
        """``(ny, nx)`` array of complex spectral parameters."""
        return self.re[None, :] + 1j * self.im[:, None]


@dataclass(frozen=True, eq=False)
class ResolventMap:
    grid: LambdaGrid
    values: np.ndarray  # log10 norms, shape (ny, nx), +inf on eigenvalue hits
    meta: dict = field(default_factory=dict)

    def finite_range(self) -> tuple[float, float]:
        v = self.values[np.isfinite(self.values)]
        if v.size == 0:
            return (math.inf, math.inf)
        return float(v.min()), float(v.max())

    def to_csv(self, path) -> None:
        pts = self.grid.points()
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("re,im,log10norm\n")
            for iy in range(self.grid.ny):
                for ix in range(self.grid.nx):
                    z = pts[iy, ix]
                    v = self.values[iy, ix]
                    fh.write(f"{float(z.real)!r},{float(z.imag)!r},{_fmt(v)}\n")

    def to_pgm(self, path) -> None:
        """8-bit binary PGM, top row = largest imaginary part."""
        lo, hi = self.finite_range()
        v = np.where(np.isfinite(self.values), self.values, hi)
        if not np.isfinite(lo):
            img = np.zeros_like(v)
        elif hi > lo:
            img = (np.clip(v, lo, hi) - lo) / (hi - lo) * 255.0
        else:
            img = np.zeros_like(v)
        img = np.rint(img[::-1]).astype(np.uint8)
        with open(path, "wb") as fh:
            fh.write(f"P5\n{self.grid.nx} {self.grid.ny}\n255\n".encode("ascii"))
            fh.write(img.tobytes())


def _fmt(v: float) -> str:
    return "inf" if v == math.inf else repr(float(v))


def pseudospectra_map(A, grid: LambdaGrid, threads: int = 1, tol: float = 1e-13,
                      meta: dict | None = None, seed: int = DEFAULT_SEED) -> ResolventMap:
    """``log10 ||(A - lam)^{-1}||`` over a rectangular lambda grid.

    Grid points are independent; each uses the same seeded start vector, so
    the result does not depend on evaluation order or thread count.
    """
    M = np.asarray(_dense(A), dtype=complex)
    pts = grid.points().ravel()

    def one(lam):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            r = resolvent_norm(M, lam, tol=tol, seed=seed)
        return math.inf if r == math.inf else math.log10(r)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            vals = list(pool.map(one, pts))
    else:
        vals = [one(z) for z in pts]
    info = dict(meta or {})
    if hasattr(A, "h"):
        info.setdefault("h", A.h)
        info.setdefault("source", A.meta.get("source", ""))
    return ResolventMap(grid, np.array(vals).reshape(grid.ny, grid.nx), info)
