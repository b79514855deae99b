"""Piecewise complex potentials and the geometry of their Phi-regions.

``Phi(V)`` is the closure of the range of ``V`` swept to the right by the
half-line ``[0, inf)``.  ``PhiRegion`` keeps a sampled version of the
range together with its convex hull and answers distance queries for both
``Phi(V)`` and ``conv(Phi(V))``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import expr as _expr

ENDPOINT_OFFSET = 1e-9
DEFAULT_SAMPLES = 2048
DEDUP_TOL = 1e-12


@dataclass(frozen=True)
class Piece:
    lo: float
    hi: float
    source: str
    ast: object = field(repr=False, compare=False)

    def __call__(self, x):
        return _expr.evaluate(self.ast, x)


@dataclass(frozen=True)
class Potential:
    """Complex potential on ``(a, b)``, smooth on each piece.

    ``breakpoints`` holds the full partition ``a = x_0 < ... < x_n = b``.
    At an interior breakpoint the right-hand piece is used.
    """

    interval: tuple[float, float]
    pieces: tuple[Piece, ...]
    k_lower: float
    name: str = ""

    @property
    def a(self) -> float:
        return self.interval[0]

    @property
    def b(self) -> float:
        return self.interval[1]

    @property
    def breakpoints(self) -> np.ndarray:
        return np.array([p.lo for p in self.pieces] + [self.b])

    @property
    def partition(self) -> np.ndarray:
        """Interior discontinuity points."""
        return self.breakpoints[1:-1]

    @property
    def source(self) -> str:
        if self.name:
            return self.name
        return " | ".join(p.source for p in self.pieces)

    def piece_index(self, x) -> np.ndarray:
        idx = np.searchsorted(self.partition, np.asarray(x, dtype=float), side="right")
        return idx

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.empty(x.shape, dtype=complex)
        idx = self.piece_index(x)
        for j, piece in enumerate(self.pieces):
            mask = idx == j
            if np.any(mask):
                out[mask] = piece(x[mask])
        return out

    def one_sided(self, j: int, x):
        """Evaluate piece ``j``'s rule (continuous extension to its closure)."""
        return self.pieces[j](np.asarray(x, dtype=float))

    def restrict(self, lo: float, hi: float) -> "Potential":
        """The same potential viewed on the sub-interval ``(lo, hi)``."""
        if not (self.a <= lo < hi <= self.b):
            raise ValueError(f"({lo}, {hi}) is not inside {self.interval}")
        pieces = []
        for p in self.pieces:
            plo, phi = max(p.lo, lo), min(p.hi, hi)
            if phi > plo:
                pieces.append(Piece(plo, phi, p.source, p.ast))
        return _finish(tuple(pieces), (lo, hi), name=f"{self.source} on ({lo}, {hi})")

    def shifted(self, s: complex) -> "Potential":
        s = complex(s)
        const = _expr.BinOp("+", _expr.Num(s.real), _expr.BinOp("*", _expr.Num(s.imag), _expr.Imag()))
        pieces = []
        for p in self.pieces:
            ast = _expr.BinOp("+", p.ast, const)
            pieces.append(Piece(p.lo, p.hi, ast.to_source(), ast))
        return _finish(tuple(pieces), self.interval)


def _finish(pieces, interval, name="", k_lower=None, probe=True) -> Potential:
    a, b = interval
    if probe:
        for p in pieces:
            xs = np.linspace(p.lo, p.hi, 17)
            xs[0] += ENDPOINT_OFFSET * (b - a)
            xs[-1] -= ENDPOINT_OFFSET * (b - a)
            try:
                vals = p(xs)
            except _expr.EvaluationError as exc:
                raise _expr.EvaluationError(f"{p.source!r} on ({p.lo}, {p.hi}): {exc}") from None
            if not np.all(np.isfinite(vals)):
                raise _expr.EvaluationError(f"{p.source!r} is not finite on ({p.lo}, {p.hi})")
    if k_lower is None:
        k_lower = min(float(np.min(sample_piece(p, 257, b - a).real)) for p in pieces)
    return Potential(tuple(interval), tuple(pieces), float(k_lower), name)


def parse_potential(src, interval, partition=()) -> Potential:
    """Build a potential from expression text.

    ``src`` is either one expression for the whole interval or a list with
    one expression per sub-interval of the partition.
    """
    a, b = (float(v) for v in interval)
    if not a < b:
        raise ValueError("interval must satisfy a < b")
    partition = [float(p) for p in partition]
    bps = [a, *partition, b]
    if any(lo >= hi for lo, hi in zip(bps, bps[1:])):
        raise ValueError("partition points must be strictly increasing inside (a, b)")
    if isinstance(src, str):
        sources = [src] * (len(bps) - 1)
    else:
        sources = list(src)
        if len(sources) != len(bps) - 1:
            raise ValueError(f"need {len(bps) - 1} expressions, got {len(sources)}")
    pieces = tuple(
        Piece(lo, hi, s, _expr.parse(s)) for lo, hi, s in zip(bps, bps[1:], sources)
    )
    return _finish(pieces, (a, b))


# ------------------------------------------------------------------ catalog


def catalog(key: str) -> Potential:
    """Named potentials: ``zero``, ``linear-i``, ``example-t5:delta=0.5``.

    Options after ``:`` are comma separated ``key=value`` pairs; ``a`` and
    ``b`` override the interval (default ``(-1, 1)``).
    """
    name, _, rest = key.partition(":")
    opts = {}
    for item in filter(None, rest.split(",")):
        k, _, v = item.partition("=")
        opts[k.strip()] = float(v)
    a, b = opts.pop("a", -1.0), opts.pop("b", 1.0)
    if name == "zero":
        V = parse_potential("0", (a, b))
    elif name == "linear-i":
        V = parse_potential("i*x", (a, b))
    elif name == "example-t5":
        d = opts.pop("delta", 0.5)
        if not a < 0 < b:
            raise ValueError("example-t5 needs 0 inside the interval")
        V = parse_potential([f"i*(x - {d!r})", f"i*(x + {d!r})"], (a, b), [0.0])
    else:
        raise KeyError(f"unknown catalog potential {name!r}")
    if opts:
        raise KeyError(f"unused options {sorted(opts)} for {name!r}")
    return Potential(V.interval, V.pieces, V.k_lower, key)


CATALOG = ("zero", "linear-i", "example-t5:delta=0.5")


# ----------------------------------------------------------------- sampling


def sample_piece(piece: Piece, n: int, length: float) -> np.ndarray:
    return piece(chebyshev_nodes(piece.lo, piece.hi, n, length))


def chebyshev_nodes(lo: float, hi: float, n: int, length: float) -> np.ndarray:
    """Chebyshev extrema mapped onto ``[lo + eps, hi - eps]``."""
    eps = ENDPOINT_OFFSET * length
    t = -np.cos(np.pi * np.arange(n) / (n - 1))
    return 0.5 * (lo + hi) + 0.5 * (hi - lo - 2 * eps) * t


def sample_range(V: Potential, samples_per_piece: int = DEFAULT_SAMPLES) -> np.ndarray:
    """Samples of the closure of ``Ran(V)``, one Chebyshev set per piece."""
    if samples_per_piece < 2:
        raise ValueError("samples_per_piece must be >= 2")
    out = []
    for p in V.pieces:
        vals = sample_piece(p, samples_per_piece, V.b - V.a)
        if not np.all(np.isfinite(vals)):
            raise _expr.EvaluationError(f"non-finite value of {p.source!r}")
        out.append(vals)
    return np.concatenate(out)


def _sampling_radius(V: Potential, samples_per_piece: int) -> float:
    r = 0.0
    for p in V.pieces:
        x = chebyshev_nodes(p.lo, p.hi, samples_per_piece, V.b - V.a)
        vals = p(x)
        gaps = np.abs(np.diff(vals))
        r = max(r, float(gaps.max()) if gaps.size else 0.0)
        # the offset endpoints miss a sliver of the closure
        ends = p(np.array([p.lo, p.hi]))
        r = max(r, float(np.max(np.abs(ends - vals[[0, -1]]))))
    return r


# ----------------------------------------------------------------- geometry


def _cross(o, a, b) -> float:
    return (a.real - o.real) * (b.imag - o.imag) - (a.imag - o.imag) * (b.real - o.real)


def convex_hull(points) -> np.ndarray:
    """Monotone-chain hull, counter-clockwise, collinear points dropped."""
    pts = np.asarray(points, dtype=complex).ravel()
    order = np.lexsort((pts.imag, pts.real))
    pts = pts[order]
    keep = [pts[0]]
    for z in pts[1:]:
        if abs(z - keep[-1]) > DEDUP_TOL:
            keep.append(z)
    if len(keep) <= 2:
        return np.array(keep)
    # scale-aware collinearity tolerance
    span = max(abs(z - keep[0]) for z in keep)
    tol = 1e-13 * span * span

    def chain(seq):
        out = []
        for z in seq:
            while len(out) >= 2 and _cross(out[-2], out[-1], z) <= tol:
                out.pop()
            out.append(z)
        return out

    lower = chain(keep)
    upper = chain(reversed(keep))
    hull = lower[:-1] + upper[:-1]
    return np.array(hull)


def _segment_distance(p: complex, a: complex, b: complex) -> float:
    d = b - a
    L2 = d.real * d.real + d.imag * d.imag
    if L2 == 0.0:
        return abs(p - a)
    t = ((p - a) * d.conjugate()).real / L2
    t = min(1.0, max(0.0, t))
    return abs(p - (a + t * d))


def ray_distance(lam, c):
    """Distance from ``lam`` to the rightward rays ``{c + t : t >= 0}``."""
    d = np.asarray(lam) - np.asarray(c)
    return np.where(d.real <= 0, np.abs(d), np.abs(d.imag))


@dataclass(frozen=True)
class PhiRegion:
    range_samples: np.ndarray
    hull: np.ndarray
    sampling_radius: float = 0.0
    recession: complex = 1.0 + 0.0j

    @classmethod
    def from_samples(cls, samples, sampling_radius: float = 0.0) -> "PhiRegion":
        s = np.asarray(samples, dtype=complex).ravel()
        if s.size == 0:
            raise ValueError("need at least one sample")
        return cls(s, convex_hull(s), float(sampling_radius))

    @classmethod
    def from_potential(cls, V: Potential, samples_per_piece: int = DEFAULT_SAMPLES) -> "PhiRegion":
        s = sample_range(V, samples_per_piece)
        return cls.from_samples(s, _sampling_radius(V, samples_per_piece))

    def dist_to_phi(self, lam) -> float:
        return dist_to_phi(lam, self)

    def dist_to_conv_phi(self, lam) -> float:
        return dist_to_conv_phi(lam, self)

    def contains_conv(self, lam) -> bool:
        return _in_conv_phi(complex(lam), self.hull)


def dist_to_phi(lam, region: PhiRegion) -> float:
    """Distance from ``lam`` to the sampled ``Phi(V)`` (union of rays)."""
    return float(np.min(ray_distance(complex(lam), region.range_samples)))


def _in_conv_phi(lam: complex, hull: np.ndarray, tol: float = 1e-14) -> bool:
    # a point of hull + [0, inf) lies on the horizontal line through lam
    # and to its left iff the leftmost crossing of that line is <= Re lam
    y = lam.imag
    n = len(hull)
    crossings = []
    if n == 1:
        if abs(hull[0].imag - y) <= tol:
            crossings.append(hull[0].real)
    else:
        edges = [(hull[k], hull[(k + 1) % n]) for k in range(n if n > 2 else 1)]
        for p, q in edges:
            lo, hi = sorted((p.imag, q.imag))
            if y < lo - tol or y > hi + tol:
                continue
            if abs(q.imag - p.imag) <= tol:
                crossings.extend([p.real, q.real])
            else:
                t = (y - p.imag) / (q.imag - p.imag)
                crossings.append(p.real + t * (q.real - p.real))
    return bool(crossings) and min(crossings) <= lam.real + tol


def dist_to_conv_phi(lam, region: PhiRegion) -> float:
    """Distance from ``lam`` to ``conv(hull) + [0, inf)``."""
    lam = complex(lam)
    hull = region.hull
    if _in_conv_phi(lam, hull):
        return 0.0
    best = float(np.min(ray_distance(lam, hull)))
    n = len(hull)
    for k in range(n if n > 2 else n - 1):
        best = min(best, _segment_distance(lam, hull[k], hull[(k + 1) % n]))
    return best


def conv_phi_of_pieces(V: Potential, samples_per_piece: int = DEFAULT_SAMPLES) -> list[PhiRegion]:
    """One region per piece of ``V`` (used for partition refinement)."""
    out = []
    for j in range(len(V.pieces)):
        p = V.pieces[j]
        out.append(PhiRegion.from_potential(V.restrict(p.lo, p.hi), samples_per_piece))
    return out


def min_piece_distance(V: Potential, lam, n_parts: int, samples_per_piece: int = 512) -> float:
    """``min_j dist(lam, conv Phi(V_j))`` over a uniform refinement of V's partition."""
    pts = set(V.breakpoints.tolist())
    grid = np.linspace(V.a, V.b, n_parts + 1)
    pts.update(grid.tolist())
    cuts = sorted(pts)
    best = math.inf
    for lo, hi in zip(cuts, cuts[1:]):
        if hi - lo <= 0:
            continue
        region = PhiRegion.from_potential(V.restrict(lo, hi), samples_per_piece)
        best = min(best, dist_to_conv_phi(lam, region))
    return best
