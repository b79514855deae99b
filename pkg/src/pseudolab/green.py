"""Exact Green functions of ``-h^2 d^2/dx^2 + V - lam`` by RK4 shooting.

Solutions grow like ``exp(xi / h)``, so every integration keeps a running
logarithmic scale: the stored state is renormalised whenever it exceeds
``RESCALE_AT`` and the true solution is ``stored * exp(log_scale)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .potential import Potential

RESCALE_AT = 1e100
DX_PER_H = 100  # default RK4 steps per unit of h
MIN_DX_PER_H = 10
EIG_RTOL = 1e-9
WRONSKIAN_RTOL = 1e-10


class StepSizeError(ValueError):
    pass


class EigenvalueHit(ArithmeticError):
    """``lam`` is numerically an eigenvalue."""


def ode_mesh(V: Potential, lo: float, hi: float, dx_max: float, extra=()) -> np.ndarray:
    """Points of ``[lo, hi]`` containing the breakpoints and ``extra``, gaps ``<= dx_max``."""
    anchors = [lo, hi, *(p for p in V.partition if lo < p < hi), *(e for e in extra if lo < e < hi)]
    anchors = np.unique(np.asarray(anchors, dtype=float))
    # merge anchors closer than rounding so no zero-length step appears
    keep = np.concatenate(([True], np.diff(anchors) > 1e-13 * (hi - lo)))
    anchors = anchors[keep]
    parts = []
    for s, e in zip(anchors[:-1], anchors[1:]):
        k = max(1, int(math.ceil((e - s) / dx_max - 1e-9)))
        parts.append(np.linspace(s, e, k + 1)[:-1])
    parts.append(anchors[-1:])
    return np.concatenate(parts)


@dataclass(frozen=True, eq=False)
class OdeSolution:
    """Samples of ``(f, f')`` for ``f'' = h^-2 (V - lam) f`` on an ascending mesh.

    ``f``, ``fp`` have shape ``(n,)`` or ``(n, m)`` for ``m`` values of
    ``lam``; the true values are ``f * exp(log_scale)``.  ``ledger`` lists
    ``(x, factor)`` of each renormalisation.
    """

    lam: np.ndarray
    h: float
    x: np.ndarray
    f: np.ndarray
    fp: np.ndarray
    log_scale: np.ndarray
    start: str
    ledger: tuple = ()

    def log_f(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.f.astype(complex)) + self.log_scale

    def log_fp(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.fp.astype(complex)) + self.log_scale

    def index(self, x0: float) -> int:
        k = int(np.argmin(np.abs(self.x - x0)))
        if abs(self.x[k] - x0) > 1e-12 * max(1.0, abs(x0)):
            raise ValueError(f"{x0} is not a mesh point")
        return k

    def at(self, x0: float):
        """``(log f, log f')`` at a mesh point."""
        k = self.index(x0)
        return self.log_f()[k], self.log_fp()[k]


def stage_samples(V: Potential, mesh) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``V`` at the start, midpoint and end of every mesh step, from the step's own piece."""
    mesh = np.asarray(mesh, dtype=float)
    s, e = mesh[:-1], mesh[1:]
    mid = 0.5 * (s + e)
    j = np.asarray(V.piece_index(mid))
    v0 = np.empty(s.size, dtype=complex)
    vm, v1 = v0.copy(), v0.copy()
    for k in np.unique(j):
        sel = j == k
        v0[sel] = V.one_sided(int(k), s[sel])
        vm[sel] = V.one_sided(int(k), mid[sel])
        v1[sel] = V.one_sided(int(k), e[sel])
    return v0, vm, v1


def integrate_solution(V: Potential, lam, h: float, from_end: str = "left", mesh=None,
                       dx: float | None = None, lo: float | None = None, hi: float | None = None,
                       data=(0.0, 1.0), samples=None) -> OdeSolution:
    """Classical RK4 for ``(f, g)' = (g, h^-2 (V - lam) f)`` from one end of ``[lo, hi]``.

    ``lam`` may be an array (integrated simultaneously).  Initial data
    ``(f, f') = data`` at the starting end (default ``(0, 1)``).
    ``samples`` may carry precomputed ``stage_samples(V, mesh)``.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    lo = V.a if lo is None else lo
    hi = V.b if hi is None else hi
    if mesh is None:
        mesh = ode_mesh(V, lo, hi, dx or h / DX_PER_H)
    mesh = np.asarray(mesh, dtype=float)
    steps = np.diff(mesh)
    if np.any(steps <= 0):
        raise ValueError("mesh must be strictly increasing")
    if np.max(steps) > h / MIN_DX_PER_H * (1 + 1e-9):
        raise StepSizeError(f"step {np.max(steps):.3g} exceeds h/{MIN_DX_PER_H}; the fast scale is unresolved")
    if from_end not in ("left", "right"):
        raise ValueError("from_end must be 'left' or 'right'")
    vs, vm, ve = samples if samples is not None else stage_samples(V, mesh)
    if np.ndim(lam) == 0:
        return _integrate_scalar(complex(lam), float(h), mesh, vs, vm, ve, from_end, data)
    lam_arr = np.atleast_1d(np.asarray(lam, dtype=complex))
    m = lam_arr.size
    n = mesh.size
    order = range(n - 1) if from_end == "left" else range(n - 1, 0, -1)
    F = np.empty((n, m), dtype=complex)
    G = np.empty((n, m), dtype=complex)
    L = np.zeros((n, m))
    k0 = 0 if from_end == "left" else n - 1
    f = np.full(m, data[0], dtype=complex)
    g = np.full(m, data[1], dtype=complex)
    logs = np.zeros(m)
    F[k0], G[k0] = f, g
    ledger = []
    inv_h2 = 1.0 / (h * h)
    if from_end == "right":
        vs, ve = ve, vs
    for k in order:
        k1 = k + 1 if from_end == "left" else k - 1
        i = min(k, k1)
        step = mesh[k1] - mesh[k]
        e = mesh[k1]
        q0 = (vs[i] - lam_arr) * inv_h2
        qm = (vm[i] - lam_arr) * inv_h2
        q1 = (ve[i] - lam_arr) * inv_h2
        a1f, a1g = g, q0 * f
        a2f, a2g = g + 0.5 * step * a1g, qm * (f + 0.5 * step * a1f)
        a3f, a3g = g + 0.5 * step * a2g, qm * (f + 0.5 * step * a2f)
        a4f, a4g = g + step * a3g, q1 * (f + step * a3f)
        f = f + step / 6 * (a1f + 2 * a2f + 2 * a3f + a4f)
        g = g + step / 6 * (a1g + 2 * a2g + 2 * a3g + a4g)
        if not (np.all(np.isfinite(f)) and np.all(np.isfinite(g))):
            raise FloatingPointError("non-finite ODE state; reduce the step")
        big = np.maximum(np.abs(f), h * np.abs(g))
        over = big > RESCALE_AT
        if np.any(over):
            f = np.where(over, f / np.where(over, big, 1), f)
            g = np.where(over, g / np.where(over, big, 1), g)
            logs = logs + np.where(over, np.log(np.where(over, big, 1)), 0)
            ledger.append((float(e), tuple(float(b) if o else 1.0 for b, o in zip(big, over))))
        F[k1], G[k1], L[k1] = f, g, logs
    return OdeSolution(lam_arr, float(h), mesh, F, G, L, from_end, tuple(ledger))


def _integrate_scalar(lam, h, mesh, vs, vm, ve, from_end, data) -> OdeSolution:
    """Same scheme as ``integrate_solution`` with Python complex arithmetic (one ``lam``)."""
    n = mesh.size
    inv_h2 = 1.0 / (h * h)
    xs = mesh.tolist()
    q0s = ((vs - lam) * inv_h2).tolist()
    qms = ((vm - lam) * inv_h2).tolist()
    q1s = ((ve - lam) * inv_h2).tolist()
    F = [0j] * n
    G = [0j] * n
    L = [0.0] * n
    if from_end == "left":
        order = range(n - 1)
        k0, d = 0, 1
    else:
        order = range(n - 1, 0, -1)
        k0, d = n - 1, -1
        q0s, q1s = q1s, q0s
    f, g = complex(data[0]), complex(data[1])
    logs = 0.0
    F[k0], G[k0] = f, g
    ledger = []
    for k in order:
        k1 = k + d
        i = k if d > 0 else k1
        step = xs[k1] - xs[k]
        q0, qm, q1 = q0s[i], qms[i], q1s[i]
        hs = 0.5 * step
        a1f, a1g = g, q0 * f
        a2f, a2g = g + hs * a1g, qm * (f + hs * a1f)
        a3f, a3g = g + hs * a2g, qm * (f + hs * a2f)
        a4f, a4g = g + step * a3g, q1 * (f + step * a3f)
        f = f + step / 6 * (a1f + 2 * a2f + 2 * a3f + a4f)
        g = g + step / 6 * (a1g + 2 * a2g + 2 * a3g + a4g)
        big = max(abs(f), h * abs(g))
        if big > RESCALE_AT:
            f, g = f / big, g / big
            logs += math.log(big)
            ledger.append((xs[k1], big))
        elif not big < math.inf:
            raise FloatingPointError("non-finite ODE state; reduce the step")
        F[k1], G[k1], L[k1] = f, g, logs
    return OdeSolution(lam, h, mesh, np.array(F), np.array(G), np.array(L), from_end, tuple(ledger))


def log_wronskian(u: OdeSolution, v: OdeSolution) -> np.ndarray:
    """``log(u v' - u' v)`` at every common mesh point."""
    if u.x.shape != v.x.shape or not np.array_equal(u.x, v.x):
        raise ValueError("solutions live on different meshes")
    w = u.f * v.fp - u.fp * v.f
    with np.errstate(divide="ignore"):
        return np.log(w.astype(complex)) + u.log_scale + v.log_scale


def wronskian_spread(u: OdeSolution, v: OdeSolution, trim: int = 1) -> float:
    """Relative variation ``max |W - W_0| / |W_0|`` of the Wronskian across the mesh."""
    lw = log_wronskian(u, v)[trim:len(u.x) - trim]
    ref = lw[len(lw) // 2]
    return float(np.max(np.abs(np.expm1(lw - ref))))


# ------------------------------------------------------------------ kernels


@dataclass(frozen=True, eq=False)
class GreenKernel:
    """``G(x, y) = -u(min) v(max) / (h^2 W)``, the kernel of ``(K_h - lam)^-1``."""

    V: Potential
    lam: complex
    h: float
    u: OdeSolution
    v: OdeSolution
    log_w: complex

    @property
    def wronskian_log10_abs(self) -> float:
        return self.log_w.real / math.log(10)

    def _logs(self, pts):
        idx = np.array([self.u.index(p) for p in np.atleast_1d(pts)])
        return self.u.log_f()[idx], self.v.log_f()[idx]

    def matrix(self, xs, ys=None) -> np.ndarray:
        """Sampled kernel ``G(x_i, y_j)``; points must be mesh points."""
        ys = xs if ys is None else ys
        lux, lvx = self._logs(xs)
        luy, lvy = self._logs(ys)
        X = np.asarray(xs)[:, None]
        Y = np.asarray(ys)[None, :]
        left = X <= Y
        lg = np.where(left, lux[:, None] + lvy[None, :], luy[None, :] + lvx[:, None])
        with np.errstate(over="ignore", invalid="ignore"):
            out = -np.exp(lg - self.log_w) / (self.h * self.h)
        return np.where(np.isfinite(lg.real), out, 0)

    def __call__(self, x: float, y: float) -> complex:
        return complex(self.matrix(np.array([x]), np.array([y]))[0, 0])

    def apply(self, r, xs) -> np.ndarray:
        """``int G(x, y) r(y) dy`` at the points ``xs`` by the trapezoid rule on the mesh."""
        m = self.u.x
        K = self.matrix(xs, m)
        w = np.empty_like(m)
        w[1:-1] = 0.5 * (m[2:] - m[:-2])
        w[0] = 0.5 * (m[1] - m[0])
        w[-1] = 0.5 * (m[-1] - m[-2])
        return K @ (np.asarray(r, dtype=complex) * w)


def green_kernel(V: Potential, lam: complex, h: float, extra=(), dx: float | None = None,
                 lo: float | None = None, hi: float | None = None) -> GreenKernel:
    """Green kernel on ``[lo, hi]`` (default ``V``'s interval) with Dirichlet ends."""
    lo = V.a if lo is None else lo
    hi = V.b if hi is None else hi
    mesh = ode_mesh(V, lo, hi, dx or h / DX_PER_H, extra)
    u = integrate_solution(V, lam, h, "left", mesh)
    v = integrate_solution(V, lam, h, "right", mesh)
    lw = log_wronskian(u, v)
    mid = len(mesh) // 2
    log_w = lw[mid]
    # scale (|u| + h|u'|)(|v| + h|v'|) / h at the same node keeps the test
    # dimensionless and nonzero even where u' and v' both vanish
    lh = math.log(h)
    su = np.logaddexp(u.log_f()[mid].real, u.log_fp()[mid].real + lh)
    sv = np.logaddexp(v.log_f()[mid].real, v.log_fp()[mid].real + lh)
    scale = su + sv - lh
    if log_w.real < math.log(WRONSKIAN_RTOL) + scale:
        raise EigenvalueHit(f"lam={lam} is (numerically) an eigenvalue: Wronskian vanishes")
    return GreenKernel(V, complex(lam), float(h), u, v, complex(log_w))


@dataclass(frozen=True, eq=False)
class RankOneKernel:
    """Difference of the split and full resolvent kernels, ``(kappa / h^2) phi(x) phi(y)``.

    ``norm`` is ``|kappa| ||phi||^2``; the operator norm of the difference
    is ``norm / h^2``.
    """

    cut: float
    h: float
    kappa: complex
    phi_x: np.ndarray
    phi: np.ndarray
    phi_norm_sq: float
    w_full: complex  # Wronskian of the boundary solutions normalised to 1 at the cut

    @property
    def norm(self) -> float:
        return abs(self.kappa) * self.phi_norm_sq

    @property
    def operator_norm(self) -> float:
        return self.norm / self.h ** 2

    def matrix(self, xs, ys=None) -> np.ndarray:
        ys = xs if ys is None else ys
        px = np.interp(xs, self.phi_x, self.phi.real) + 1j * np.interp(xs, self.phi_x, self.phi.imag)
        py = np.interp(ys, self.phi_x, self.phi.real) + 1j * np.interp(ys, self.phi_x, self.phi.imag)
        return self.kappa / self.h ** 2 * np.outer(px, py)


def rank_one_difference(V: Potential, lam: complex, h: float, cut: float, extra=(),
                        dx: float | None = None) -> RankOneKernel:
    """Rank-one kernel from the full-interval solutions normalised at ``cut``.

    With ``u(cut) = v(cut) = 1`` the function ``w = u - v`` vanishes at the
    cut; the sub-interval Wronskians are ``W(u, w) = -W`` and ``W(w, v) = W``.
    """
    if not V.a < cut < V.b:
        raise ValueError("cut must lie strictly inside the interval")
    G = green_kernel(V, lam, h, (cut, *extra), dx)
    k = G.u.index(cut)
    lu, lv = G.u.log_f(), G.v.log_f()
    if not (np.isfinite(lu[k].real) and np.isfinite(lv[k].real)):
        raise EigenvalueHit("a boundary solution vanishes at the cut; phi cannot be normalised")
    log_kappa = lu[k] + lv[k] - G.log_w
    kappa = complex(np.exp(log_kappa))
    x = G.u.x
    with np.errstate(over="ignore", under="ignore"):
        phi = np.where(x <= cut, np.exp(lu - lu[k]), np.exp(lv - lv[k]))
    phi = np.where(np.isfinite(phi), phi, 0)
    dens = np.abs(phi) ** 2
    norm_sq = _mesh_simpson(dens, x)
    wn = np.exp(G.log_w - lu[k] - lv[k])
    return RankOneKernel(float(cut), float(h), kappa, x, phi, float(norm_sq), complex(wn))


@dataclass(frozen=True, eq=False)
class SplitKernel:
    """Green kernel of the problem with an extra Dirichlet condition at ``cut``.

    Built from independent integrations: ``u`` from ``a``, ``v`` from ``b``
    and two solutions started at the cut with data ``(0, w'(cut))`` where
    ``w = u / u(cut) - v / v(cut)``.  ``w_left = W(u, s_-)`` and
    ``w_right = W(s_+, v)`` (normalised at the cut) should equal ``-W`` and
    ``W``.
    """

    left: GreenKernel
    right: GreenKernel
    cut: float
    w_full: complex
    w_left: complex
    w_right: complex
    spread_left: float
    spread_right: float

    def matrix(self, xs, ys=None) -> np.ndarray:
        ys = xs if ys is None else ys
        xs, ys = np.asarray(xs), np.asarray(ys)
        out = np.zeros((xs.size, ys.size), dtype=complex)
        for K, side in ((self.left, xs < self.cut), (self.right, xs > self.cut)):
            cols = (ys < self.cut) if K is self.left else (ys > self.cut)
            if np.any(side) and np.any(cols):
                out[np.ix_(side, cols)] = K.matrix(xs[side], ys[cols])
        return out


def split_kernel(V: Potential, lam: complex, h: float, cut: float, extra=(),
                 dx: float | None = None) -> SplitKernel:
    G = green_kernel(V, lam, h, (cut, *extra), dx)
    x = G.u.x
    k = G.u.index(cut)
    lu, lv = G.u.log_f()[k], G.v.log_f()[k]
    up = np.exp(G.u.log_fp()[k] - lu)
    vp = np.exp(G.v.log_fp()[k] - lv)
    wp = complex(up - vp)
    wn = complex(np.exp(G.log_w - lu - lv))
    ml, mr = x[:k + 1], x[k:]
    # normalised boundary solutions restricted to each side
    un = _shift(G.u, slice(0, k + 1), -lu)
    vn = _shift(G.v, slice(k, None), -lv)
    sm = integrate_solution(V, lam, h, "right", ml, data=(0.0, wp))
    sp = integrate_solution(V, lam, h, "left", mr, data=(0.0, wp))
    lwl = log_wronskian(un, sm)
    lwr = log_wronskian(sp, vn)
    left = GreenKernel(V, complex(lam), float(h), un, sm, complex(lwl[len(ml) // 2]))
    right = GreenKernel(V, complex(lam), float(h), sp, vn, complex(lwr[len(mr) // 2]))
    return SplitKernel(left, right, float(cut), wn, complex(np.exp(left.log_w)), complex(np.exp(right.log_w)),
                       wronskian_spread(un, sm), wronskian_spread(sp, vn))


def _shift(s: OdeSolution, sl: slice, shift: complex) -> OdeSolution:
    """Restrict to ``sl`` and multiply by ``exp(shift)``."""
    f = s.f[sl] * np.exp(1j * shift.imag)
    fp = s.fp[sl] * np.exp(1j * shift.imag)
    return OdeSolution(s.lam, s.h, s.x[sl], f, fp, s.log_scale[sl] + shift.real, s.start, s.ledger)


def _mesh_simpson(y, x) -> float:
    """Simpson on each uniform run of the mesh, trapezoid-free fallback for two-point runs."""
    from scipy.integrate import simpson

    return float(simpson(np.asarray(y, dtype=float), x=x))


# ----------------------------------------------------------------- shooting


def miss(V: Potential, lam, h: float, dx: float | None = None, mesh=None, samples=None) -> np.ndarray:
    """``u(b) / (h u'(b))`` for the solution started at ``a``; zero exactly at eigenvalues.

    The ratio removes the arbitrary scale of ``u`` and is dimensionless.
    """
    s = integrate_solution(V, lam, h, "left", mesh, dx=dx, samples=samples)
    lf, lfp = s.log_f()[-1], s.log_fp()[-1]
    with np.errstate(under="ignore"):
        return np.exp(lf - lfp) / h


@dataclass(frozen=True)
class Eigenvalue:
    lam: complex
    abs_miss: float
    h: float


def _secant(fun, z0: complex, z1: complex, tol: float, maxiter: int = 60):
    f0, f1 = fun(z0), fun(z1)
    for _ in range(maxiter):
        if f1 == f0:
            break
        z2 = z1 - f1 * (z1 - z0) / (f1 - f0)
        if not np.isfinite(z2):
            return None
        z0, f0, z1, f1 = z1, f1, z2, fun(z2)
        if abs(f1) < tol and abs(z1 - z0) < 1e-12 * max(1.0, abs(z1)):
            break
    return z1, abs(f1)


def shooting_eigenvalues(V: Potential, h: float, search: tuple[float, float], count: int | None = None,
                         n_scan: int = 400, dx: float | None = None) -> list[Eigenvalue]:
    """Eigenvalues near the real window ``search`` from the zeros of ``miss``.

    Seeds are the local minima of ``|miss|`` and the sign changes of its real
    and imaginary parts on a real scan; each is refined by a complex secant
    iteration and kept when ``|miss| < 1e-9 * max |miss|`` over the scan.
    """
    lo, hi = search
    if not hi > lo:
        raise ValueError("empty search window")
    grid = np.linspace(lo, hi, n_scan)
    mesh = ode_mesh(V, V.a, V.b, dx or h / DX_PER_H)
    samples = stage_samples(V, mesh)
    m = miss(V, grid.astype(complex), h, mesh=mesh, samples=samples)
    scale = float(np.max(np.abs(m[np.isfinite(m)])))
    am = np.abs(m)
    seeds = set()
    inner = np.arange(1, n_scan - 1)
    seeds.update(inner[(am[1:-1] <= am[:-2]) & (am[1:-1] <= am[2:])].tolist())
    for part in (m.real, m.imag):
        seeds.update(np.flatnonzero(np.sign(part[:-1]) * np.sign(part[1:]) < 0).tolist())
    step = grid[1] - grid[0]
    tol = EIG_RTOL * scale
    fun = lambda z: complex(miss(V, complex(z), h, mesh=mesh, samples=samples))
    found: list[Eigenvalue] = []
    for k in sorted(seeds):
        z0 = complex(grid[k])
        with np.errstate(all="ignore"):
            try:
                res = _secant(fun, z0, z0 + 0.25 * step, tol)
            except (FloatingPointError, StepSizeError):
                res = None
        if res is None:
            continue
        z, err = res
        if err >= tol or not lo - step <= z.real <= hi + step:
            continue
        if any(abs(z - e.lam) < 1e-7 * max(1.0, abs(z)) for e in found):
            continue
        found.append(Eigenvalue(complex(z), float(err), float(h)))
    found.sort(key=lambda e: (e.lam.real, e.lam.imag))
    if not found:
        raise ValueError(f"no eigenvalues found in [{lo}, {hi}]")
    return found[:count] if count else found


def write_eigs_csv(eigs, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("re,im,abs_miss,h\n")
        for e in eigs:
            fh.write(f"{float(e.lam.real)!r},{float(e.lam.imag)!r},{float(e.abs_miss)!r},{float(e.h)!r}\n")
