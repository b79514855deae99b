"""WKB (Liouville-Green) solutions of ``-h^2 f'' + (V - lam) f = 0``.

Branch choice: if ``lam`` is outside ``Phi(V)`` then ``q = V - lam`` never
lies on ``(-inf, 0]`` (otherwise ``lam = V(x) + t`` with ``t >= 0``), so the
principal square root is continuous on every piece with ``Re sqrt(q) > 0``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .potential import ENDPOINT_OFFSET, PhiRegion, Potential

Q_MIN = 1e-12
MAX_PANELS = 2 ** 20
REFINE_RTOL = 1e-10
LOG_RANGE_MAX = 1400.0  # exp() of a wider spread cannot be held in float64
COLLAPSE_MARGIN = 5.0


class BranchError(ValueError):
    """``lam`` is too close to ``Phi(V)`` for the principal branch."""


class WkbOverflowError(OverflowError):
    pass


def branch_sqrt(V: Potential, lam: complex, x, region: PhiRegion | None = None) -> np.ndarray:
    """Principal ``sqrt(V(x) - lam)``, checked to have positive real part."""
    region = region or PhiRegion.from_potential(V, 512)
    if region.dist_to_phi(lam) <= region.sampling_radius:
        raise BranchError(f"lam={lam} lies in Phi(V) (within sampling accuracy)")
    q = V(x) - lam
    return _checked_sqrt(q)


def _checked_sqrt(q) -> np.ndarray:
    q = np.asarray(q, dtype=complex)
    bad = (np.abs(q) < Q_MIN) | ((q.imag == 0) & (q.real <= 0))
    if np.any(bad):
        raise BranchError("V - lam touches (-inf, 0]; lam is too close to Phi(V)")
    s = np.sqrt(q)
    if np.any(s.real <= 0):
        raise BranchError("principal branch lost Re > 0")
    return s


def cumulative_simpson(y, x) -> np.ndarray:
    """Cumulative integral on a uniform grid, exact for quadratics.

    Interval ``[x_j, x_{j+1}]`` uses the parabola through three neighbouring
    samples (``dx/12 (5 f_j + 8 f_{j+1} - f_{j+2})`` and its mirror).
    """
    y = np.asarray(y)
    x = np.asarray(x, dtype=float)
    n = y.size
    out = np.zeros(n, dtype=np.result_type(y, float))
    if n == 1:
        return out
    dx = np.diff(x)
    if n == 2:
        out[1] = 0.5 * dx[0] * (y[0] + y[1])
        return out
    inc = np.empty(n - 1, dtype=out.dtype)
    inc[:-1] = dx[:-1] / 12 * (5 * y[:-2] + 8 * y[1:-1] - y[2:])
    inc[-1] = dx[-1] / 12 * (-y[-3] + 8 * y[-2] + 5 * y[-1])
    out[1:] = np.cumsum(inc)
    return out


def eikonal(sqrt_q, x) -> np.ndarray:
    """``xi(x) = int_{x_0}^x sqrt(q)`` from samples; asserts ``Re xi`` increases."""
    sqrt_q = np.asarray(sqrt_q, dtype=complex)
    xi = cumulative_simpson(sqrt_q, x)
    if np.any(np.diff(xi.real) <= 0):
        raise BranchError("Re xi is not strictly increasing: branch error")
    return xi


def _simpson_panels(f, lo: float, hi: float, m: int):
    """Composite Simpson with ``m`` (even) panels; ``f`` vectorised."""
    t = np.linspace(lo, hi, m + 1)
    w = np.ones(m + 1)
    w[1:-1:2] = 4
    w[2:-1:2] = 2
    return (hi - lo) / (3 * m) * np.sum(w * f(t))


def refined_simpson(f, lo: float, hi: float, m0: int = 8, rtol: float = REFINE_RTOL,
                    max_panels: int = MAX_PANELS):
    """Simpson with panel doubling until the relative change is below ``rtol``."""
    m = max(2, m0 + (m0 % 2))
    prev = _simpson_panels(f, lo, hi, m)
    while m < max_panels:
        m *= 2
        cur = _simpson_panels(f, lo, hi, m)
        if abs(cur - prev) <= rtol * max(abs(cur), 1e-300):
            return cur
        prev = cur
    return prev


def eikonal_at(V: Potential, lam: complex, x, rtol: float = REFINE_RTOL) -> np.ndarray:
    """``xi`` at the sorted points ``x``, integrated piece by piece from ``V.a``."""
    x = np.asarray(x, dtype=float)
    if np.any(np.diff(x) < 0):
        raise ValueError("points must be sorted")
    out = np.empty(x.size, dtype=complex)
    total = 0j
    pos = V.a
    k = 0
    for j, piece in enumerate(V.pieces):
        f = lambda t, j=j: _checked_sqrt(V.one_sided(j, t) - lam)
        stops = list(x[(x >= piece.lo) & ((x < piece.hi) | (j == len(V.pieces) - 1))])
        for s in stops:
            total += refined_simpson(f, pos, s, rtol=rtol) if s > pos else 0
            pos = s
            out[k] = total
            k += 1
        if piece.hi > pos:
            total += refined_simpson(f, pos, piece.hi, rtol=rtol)
            pos = piece.hi
    xi = out[:k]
    if np.any(np.diff(xi.real) <= 0):
        raise BranchError("Re xi is not strictly increasing: branch error")
    return xi


@dataclass(frozen=True, eq=False)
class WkbSolution:
    """``y = q^(-1/4) exp(+-xi/h)`` kept as a complex logarithm."""

    lam: complex
    h: float
    x: np.ndarray
    q: np.ndarray
    sqrt_q: np.ndarray
    xi: np.ndarray
    which: str  # "y1" (growing) or "y2" (decaying)

    @property
    def sign(self) -> int:
        return 1 if self.which == "y1" else -1

    @property
    def amplitude(self) -> np.ndarray:
        return np.exp(-0.25 * np.log(self.q))

    def log_values(self) -> np.ndarray:
        return -0.25 * np.log(self.q) + self.sign * self.xi / self.h

    def log_derivative(self) -> np.ndarray:
        """``log y'`` for ``y' = +-h^-1 q^(1/4) exp(+-xi/h)``."""
        lead = 0 if self.sign > 0 else 1j * np.pi
        return 0.25 * np.log(self.q) + self.sign * self.xi / self.h - np.log(self.h) + lead

    def values(self, log_shift: float | None = None) -> np.ndarray:
        return _exp_shifted(self.log_values(), log_shift)

    def derivative(self, log_shift: float | None = None) -> np.ndarray:
        return _exp_shifted(self.log_derivative(), log_shift)


def _exp_shifted(logs, shift):
    if shift is None:
        spread = np.ptp(logs.real)
        if spread > LOG_RANGE_MAX:
            raise WkbOverflowError(
                f"WKB magnitudes span e^{spread:.0f}; split the interval into shorter pieces"
            )
        shift = float(np.max(logs.real))
    return np.exp(logs - shift)


def wkb_pair(V: Potential, lam: complex, h: float, x, region: PhiRegion | None = None):
    """The WKB solutions ``y1``, ``y2`` on the points ``x`` (sorted)."""
    if h <= 0:
        raise ValueError("h must be positive")
    x = np.asarray(x, dtype=float)
    s = branch_sqrt(V, lam, x, region)
    xi = eikonal_at(V, lam, x)
    q = s * s
    y1 = WkbSolution(complex(lam), float(h), x, q, s, xi, "y1")
    y2 = WkbSolution(complex(lam), float(h), x, q, s, xi, "y2")
    return y1, y2


def wkb_wronskian(y1: WkbSolution, y2: WkbSolution) -> np.ndarray:
    """``y2 y1' - y1 y2'`` at every node, from the log representation."""
    a = np.exp(y2.log_values() + y1.log_derivative())
    b = np.exp(y1.log_values() + y2.log_derivative())
    return a - b


def sinh_collapse_error(z) -> float:
    """Relative error of replacing ``2 sinh z`` by ``exp z``: ``|exp(-2z)|``."""
    z = np.asarray(z, dtype=complex)
    return np.abs(np.exp(-2 * z))


# ------------------------------------------------------ error-control integral


def _derivatives(f, t, delta, lo, hi):
    """Second-order finite differences, one-sided near the piece ends."""
    f0 = f(t)
    d1 = np.empty_like(f0)
    d2 = np.empty_like(f0)
    left = t - 2 * delta < lo
    right = t + 2 * delta > hi
    mid = ~(left | right)
    tm = t[mid]
    fp, fm = f(tm + delta), f(tm - delta)
    d1[mid] = (fp - fm) / (2 * delta)
    d2[mid] = (fp - 2 * f0[mid] + fm) / delta ** 2
    for mask, s in ((left, 1.0), (right, -1.0)):
        if np.any(mask):
            tt = t[mask]
            g1, g2, g3 = f(tt + s * delta), f(tt + 2 * s * delta), f(tt + 3 * s * delta)
            g0 = f0[mask]
            d1[mask] = s * (-3 * g0 + 4 * g1 - g2) / (2 * delta)
            d2[mask] = (2 * g0 - 5 * g1 + 4 * g2 - g3) / delta ** 2
    return f0, d1, d2


def error_control_integrand(V: Potential, lam: complex, j: int, t, delta=None, closed_forms=None):
    piece = V.pieces[j]
    if closed_forms is not None:
        dq, d2q = closed_forms[j]
        q = V.one_sided(j, t) - lam
        q1, q2 = dq(t), d2q(t)
    else:
        delta = delta or 1e-5 * (V.b - V.a)
        q, q1, q2 = _derivatives(lambda s: V.one_sided(j, s) - lam, t, delta, piece.lo, piece.hi)
    s = _checked_sqrt(q)
    vals = np.abs(q2 / (q * s) - 1.25 * q1 ** 2 / (q * q * s))
    if not np.all(np.isfinite(vals)):
        raise FloatingPointError("non-finite error-control integrand")
    return vals


def error_control_integral(V: Potential, lam: complex, interval=None, delta=None,
                           closed_forms=None, rtol: float = REFINE_RTOL) -> float:
    """``int |q''/q^(3/2) - (5/4) q'^2/q^(5/2)|`` summed over the pieces.

    Derivatives come from finite differences with spacing ``delta``
    (default ``1e-5 (b - a)``) unless ``closed_forms`` supplies
    ``(dq, d2q)`` per piece.
    """
    lo_all, hi_all = interval or (V.a, V.b)
    eps = ENDPOINT_OFFSET * (V.b - V.a)
    total = 0.0
    for j, piece in enumerate(V.pieces):
        lo, hi = max(piece.lo, lo_all) + eps, min(piece.hi, hi_all) - eps
        if hi <= lo:
            continue
        f = lambda t, j=j: error_control_integrand(V, lam, j, t, delta, closed_forms)
        total += float(refined_simpson(f, lo, hi, m0=64, rtol=rtol, max_panels=2 ** 16))
    return total


# --------------------------------------------------- asymptotic rank-one data


@dataclass(frozen=True)
class AsymptoticConstants:
    kappa: complex
    phi_norm_sq: float

    @property
    def product(self) -> float:
        return abs(self.kappa) * self.phi_norm_sq


def asymptotic_constants(V: Potential, lam: complex, h: float, cut: float) -> AsymptoticConstants:
    """Leading-order WKB values of the rank-one constant and ``||phi||^2``.

    With ``s_-``, ``s_+`` the branch square roots of ``q`` just left and
    right of the cut (equal when ``V`` is continuous there)::

        kappa        = -h / (s_- + s_+)
        ||phi||^2    = h / (2 Re s_-) + h / (2 Re s_+)

    ``kappa`` is ``W^-1 u(cut) v(cut)`` with ``W = u v' - u' v``; the
    resolvent kernel itself carries an extra ``h^-2``.
    """
    if not V.a < cut < V.b:
        raise ValueError("cut must lie strictly inside the interval")
    eps = ENDPOINT_OFFSET * (V.b - V.a)
    jl = int(V.piece_index(cut - eps))
    jr = int(V.piece_index(cut + eps)) if cut not in V.partition else jl + 1
    sl = _checked_sqrt(V.one_sided(jl, np.array([cut])) - lam)[0]
    sr = _checked_sqrt(V.one_sided(jr, np.array([cut])) - lam)[0]
    kappa = -h / (sl + sr)
    norm_sq = h / (2 * sl.real) + h / (2 * sr.real)
    return AsymptoticConstants(complex(kappa), float(norm_sq))


def write_diagnostics_csv(rows, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("h,max_rel_err_y2,kappa,phi_norm_sq,product\n")
        for r in rows:
            fh.write(",".join(repr(float(v)) for v in r) + "\n")


# ------------------------------------------------------------ accuracy check


def y2_relative_error(V: Potential, lam: complex, h: float, n_points: int = 401,
                      dx: float | None = None) -> float:
    """``max |y2 - f| / |f|`` over ``n_points`` nodes, ``f`` the exact solution.

    ``f`` is integrated by RK4 from ``b`` towards ``a`` (the stable direction
    for the decaying solution) with the WKB value and slope at ``b``.
    """
    from .green import integrate_solution, ode_mesh

    x = np.linspace(V.a, V.b, n_points)
    mesh = ode_mesh(V, V.a, V.b, dx or h / 100, extra=x)
    _, y2 = wkb_pair(V, lam, h, x)
    lv, ld = y2.log_values(), y2.log_derivative()
    exact = integrate_solution(V, lam, h, "right", mesh, data=(1.0, np.exp(ld[-1] - lv[-1])))
    idx = np.searchsorted(mesh, x)
    idx = np.clip(idx, 0, mesh.size - 1)
    lf = exact.log_f()[idx]
    return float(np.max(np.abs(np.expm1((lv - lv[-1]) - lf))))
