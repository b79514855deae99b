"""Command-line front end: ``pseudolab <subcommand> [--config FILE] [--out DIR] ...``.

Every subcommand writes CSV files into the output directory, a copy of the
resolved configuration (``config.txt``) and, when an internal check fails,
``failures.json``.  The exit code is 0 iff every check passed, 1 if some
check failed and 2 for invalid input.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
import warnings
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import green, linalg, quasimode, twist, wkb
from .discretize import Grid, assemble, assemble_split
from .potential import CATALOG, PhiRegion, catalog, parse_potential

SUBCOMMANDS = ("map", "blowup", "bound", "eigs", "rankone", "twist", "wkbcheck")


class ConfigError(ValueError):
    pass


def _floats(text: str) -> tuple[float, ...]:
    text = text.strip()
    if not text:
        return ()
    return tuple(float(t) for t in text.split(","))


def _complex(text: str) -> complex:
    return complex(text.replace(" ", "").replace("i", "j"))


def _fmt_complex(z: complex) -> str:
    return f"{z.real!r}{z.imag:+.17g}j" if z.imag else repr(z.real)


@dataclass(frozen=True)
class RunConfig:
    """All parameters of a run; ``to_text``/``from_text`` round-trip exactly."""

    subcommand: str
    potential: str = "linear-i"
    interval: tuple[float, ...] = (-1.0, 1.0)
    partition: tuple[float, ...] = ()
    hs: tuple[float, ...] = (0.1,)
    lam: complex = 1.0
    lam_grid: tuple[float, ...] = ()  # re_min, re_max, im_min, im_max, nx, ny
    n: int = 400
    p: float = 0.5
    cut: float = 0.0
    search: tuple[float, ...] = (0.0, 12.0)
    g_exp: float = 2 / 3
    m: float = 0.0  # 0 selects m automatically
    seed: int = linalg.DEFAULT_SEED
    threads: int = 1
    dump_matrix: str = ""

    _KIND = {
        "interval": "floats", "partition": "floats", "hs": "floats", "lam_grid": "floats",
        "search": "floats", "lam": "complex", "n": "int", "seed": "int", "threads": "int",
        "p": "float", "cut": "float", "g_exp": "float", "m": "float",
    }

    def validate(self) -> "RunConfig":
        if self.subcommand not in SUBCOMMANDS:
            raise ConfigError(f"unknown subcommand {self.subcommand!r}")
        if len(self.interval) != 2 or not self.interval[0] < self.interval[1]:
            raise ConfigError("interval must be 'a,b' with a < b")
        if not self.hs or any(not (h > 0 and math.isfinite(h)) for h in self.hs):
            raise ConfigError("hs must be a non-empty list of positive numbers")
        if self.n < 3:
            raise ConfigError("n must be at least 3")
        if not 0 < self.p < 1:
            raise ConfigError("p must lie in (0, 1)")
        if not 0 < self.g_exp < 1:
            raise ConfigError("g_exp must lie in (0, 1)")
        if self.threads < 1:
            raise ConfigError("threads must be positive")
        if self.m < 0:
            raise ConfigError("m must be non-negative (0 = automatic)")
        if self.lam_grid:
            if len(self.lam_grid) != 6 or self.lam_grid[4] < 1 or self.lam_grid[5] < 1:
                raise ConfigError("lam_grid must be 're_min,re_max,im_min,im_max,nx,ny'")
            if self.lam_grid[1] < self.lam_grid[0] or self.lam_grid[3] < self.lam_grid[2]:
                raise ConfigError("lam_grid bounds are inverted")
        elif self.subcommand == "map":
            raise ConfigError("map needs lam_grid")
        if len(self.search) != 2 or not self.search[0] < self.search[1]:
            raise ConfigError("search must be 'lo,hi' with lo < hi")
        if self.subcommand in ("rankone",) and not self.interval[0] < self.cut < self.interval[1]:
            raise ConfigError("cut must lie inside the interval")
        self.build_potential()
        return self

    def build_potential(self):
        name = self.potential.split(":")[0]
        try:
            if name in {c.split(':')[0] for c in CATALOG}:
                return catalog(self.potential)
            return parse_potential(self.potential, tuple(self.interval), tuple(self.partition))
        except (ValueError, KeyError) as exc:
            raise ConfigError(f"potential: {exc}") from exc

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            kind = self._KIND.get(f.name)
            if kind == "floats":
                s = ",".join(repr(float(t)) for t in v)
            elif kind == "complex":
                s = _fmt_complex(complex(v))
            elif kind == "float":
                s = repr(float(v))
            else:
                s = str(v)
            lines.append(f"{f.name}={s}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, **overrides) -> "RunConfig":
        values: dict = {}
        for k, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {k}: expected key=value")
            key, val = (t.strip() for t in line.split("=", 1))
            values[key] = val
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_mapping(values)

    @classmethod
    def from_mapping(cls, values: dict) -> "RunConfig":
        names = {f.name for f in fields(cls)}
        kw = {}
        for key, val in values.items():
            if key not in names:
                raise ConfigError(f"unknown key {key!r}")
            kind = cls._KIND.get(key)
            try:
                if not isinstance(val, str):
                    kw[key] = tuple(val) if kind == "floats" else val
                elif kind == "floats":
                    kw[key] = _floats(val)
                elif kind == "complex":
                    kw[key] = _complex(val)
                elif kind == "int":
                    kw[key] = int(val)
                elif kind == "float":
                    kw[key] = float(val)
                else:
                    kw[key] = val
            except ValueError as exc:
                raise ConfigError(f"{key}: cannot parse {val!r}") from exc
        if "subcommand" not in kw:
            raise ConfigError("subcommand missing")
        return cls(**kw).validate()


# ------------------------------------------------------------------ runner


@dataclass
class Report:
    failures: list = field(default_factory=list)
    lines: list = field(default_factory=list)

    def check(self, ok: bool, name: str, **detail) -> None:
        if not ok:
            self.failures.append({"check": name, **{k: _plain(v) for k, v in detail.items()}})

    def say(self, text: str) -> None:
        self.lines.append(text)
        print(text)


def _plain(v):
    if isinstance(v, complex):
        return [v.real, v.imag]
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    return v


def _grid(cfg: RunConfig, V):
    return Grid.for_potential(V, cfg.n)


def _rows_csv(path: Path, header: str, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header + "\n")
        for r in rows:
            fh.write(",".join(repr(float(v)) for v in r) + "\n")


def cmd_map(cfg: RunConfig, out: Path, rep: Report) -> None:
    V = cfg.build_potential()
    g = cfg.lam_grid
    lg = linalg.LambdaGrid(g[0], g[1], g[2], g[3], int(g[4]), int(g[5]))
    region = PhiRegion.from_potential(V)
    areas = []
    for h in cfg.hs:
        A = assemble(V, h, _grid(cfg, V))
        M = linalg.pseudospectra_map(A, lg, threads=cfg.threads, seed=cfg.seed)
        stem = f"map_h{h!r}"
        M.to_csv(out / f"{stem}.csv")
        M.to_pgm(out / f"{stem}.pgm")
        lo, hi = M.finite_range()
        cell = (lg.re[1] - lg.re[0] if lg.nx > 1 else 1.0) * (lg.im[1] - lg.im[0] if lg.ny > 1 else 1.0)
        area = float(np.count_nonzero(M.values >= 3)) * cell
        areas.append(area)
        rep.say(f"h={h!r}: log10 norm in [{lo:.6g}, {hi:.6g}], area(log10 >= 3) = {area:.6g}")
        # discrete numerical-range bound outside the convex hull
        for z, v in zip(lg.points().ravel(), M.values.ravel()):
            d = region.dist_to_conv_phi(z) - region.sampling_radius
            if d > 0 and np.isfinite(v):
                rep.check(10 ** v <= 1 / d * (1 + 1e-8), "numerical_range_bound", h=h, lam=complex(z))
    if len(areas) > 1:
        rep.say("areas by h: " + ", ".join(f"{h!r}:{a:.6g}" for h, a in zip(cfg.hs, areas)))


def cmd_blowup(cfg: RunConfig, out: Path, rep: Report) -> None:
    V = cfg.build_potential()
    rows = quasimode.blowup_sweep(V, cfg.lam, cfg.hs, cfg.p)
    quasimode.write_sweep_csv(rows, out / "blowup.csv")
    for r in rows:
        rep.say(f"h={r.h!r}: residual ratio {r.ratio:.6g}, bound {r.bound:.6g}, ||R|| >= {r.lower_bound_resolvent:.6g}")
        rep.check(r.ratio <= r.bound, "residual_within_bound", h=r.h, ratio=r.ratio, bound=r.bound)


def cmd_bound(cfg: RunConfig, out: Path, rep: Report) -> None:
    V = cfg.build_potential()
    region = PhiRegion.from_potential(V)
    d_phi = region.dist_to_phi(cfg.lam)
    d_conv = region.dist_to_conv_phi(cfg.lam)
    ref = 1 / d_phi if d_phi > 0 else math.inf
    rows = []
    for h in cfg.hs:
        r = linalg.resolvent_norm(assemble(V, h, _grid(cfg, V)), cfg.lam, seed=cfg.seed)
        rows.append((h, r, ref))
        if d_conv > region.sampling_radius:
            rep.check(r <= 1 / (d_conv - region.sampling_radius) * (1 + 1e-8), "numerical_range_bound", h=h, norm=r)
    _rows_csv(out / "bound.csv", "h,resolvent_norm,reference", rows)
    hs_sorted = sorted(rows)
    k = max(1, len(rows) // 4)
    tail = [r for _, r, _ in hs_sorted[:k]]
    rep.say(f"reference 1/dist = {ref:.6g}; smallest-quartile norms min/median/max = "
            f"{min(tail):.6g}/{float(np.median(tail)):.6g}/{max(tail):.6g}")


def cmd_eigs(cfg: RunConfig, out: Path, rep: Report) -> None:
    V = cfg.build_potential()
    found = []
    for h in cfg.hs:
        try:
            found.extend(green.shooting_eigenvalues(V, h, tuple(cfg.search)))
        except ValueError as exc:
            rep.check(False, "roots_found", h=h, error=str(exc))
    green.write_eigs_csv(found, out / "eigs.csv")
    for e in found:
        rep.say(f"h={e.h!r}: lam = {e.lam.real:.12g} {e.lam.imag:+.3g}i  |miss| = {e.abs_miss:.3g}")


def _matrix_rank_one(V, lam, h, cut, n):
    """Resolvent difference of the split and full matrices, and its top singular values."""
    grid = Grid.for_potential(V, n)
    A = assemble(V, h, grid)
    B = assemble_split(V, h, grid, [cut])
    R = np.linalg.inv(A.entries - lam * np.eye(A.dim))
    Rs = np.zeros_like(R)
    keep = np.setdiff1d(np.arange(A.dim), B.interior_dirichlet)
    Rs[np.ix_(keep, keep)] = np.linalg.inv(B.entries - lam * np.eye(B.dim))
    return np.linalg.svd(Rs - R, compute_uv=False), A, B


def cmd_rankone(cfg: RunConfig, out: Path, rep: Report) -> None:
    V = cfg.build_potential()
    lam = cfg.lam
    rows = []
    for h in cfg.hs:
        K = green.rank_one_difference(V, lam, h, cfg.cut)
        S = green.split_kernel(V, lam, h, cfg.cut)
        G = green.green_kernel(V, lam, h, (cfg.cut,))
        mesh = G.u.x[1:-1]
        xs = mesh[:: max(1, mesh.size // 200)]
        sv = np.linalg.svd(S.matrix(xs) - G.matrix(xs), compute_uv=False)
        rep.check(sv[1] <= 1e-8 * sv[0], "rank_one", h=h, ratio=float(sv[1] / sv[0]))
        msv, A, B = _matrix_rank_one(V, lam, h, cfg.cut, cfg.n)
        est = wkb.asymptotic_constants(V, lam, h, cfg.cut)
        rows.append((h, abs(K.kappa), K.phi_norm_sq, K.norm, msv[0], est.product))
        rep.say(f"h={h!r}: |kappa| {abs(K.kappa):.6g}, ||phi||^2 {K.phi_norm_sq:.6g}, "
                f"|kappa| ||phi||^2 {K.norm:.6g}, matrix ||R~ - R|| {msv[0]:.6g}, WKB {est.product:.6g}")
        # triangle inequality: ||R|| <= ||R~|| + ||R~ - R||
        r_full = linalg.resolvent_norm(A, lam, seed=cfg.seed)
        r_split = linalg.resolvent_norm(B, lam, seed=cfg.seed)
        rep.check(r_full <= r_split + msv[0] + 1e-6, "split_triangle", h=h)
    _rows_csv(out / "rankone.csv", "h,kappa_abs,phi_norm_sq,norm,resolvent_difference_norm,wkb_product", rows)


def cmd_twist(cfg: RunConfig, out: Path, rep: Report) -> None:
    V = cfg.build_potential()
    m = cfg.m or None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", linalg.ConvergenceWarning)
        rows = twist.twist_sweep(V, cfg.lam, cfg.hs, cfg.cut, cfg.g_exp, m=m)
    twist.write_twist_csv(rows, out / "twist.csv")
    for r in rows:
        rep.say(f"h={r.h!r}: |P| {r.norm_P:.6g} |Q| {r.norm_Q:.6g} |G| {r.norm_G:.6g} "
                f"diff {r.res_diff:.6g} <= {r.bound_rhs:.6g}")
        rep.check(r.res_diff <= r.bound_rhs * (1 + 1e-8), "bound_chain", h=r.h)
        rep.check(r.norm_R2 <= r.h2_hull_bound * (1 + 1e-8), "h2_hull_bound", h=r.h)
    if len(rows) >= 3:
        ex = twist.scaling_exponents(rows)
        rep.say("fitted exponents: " + ", ".join(f"{k} {v:.4f}" for k, v in ex.items()))


def cmd_wkbcheck(cfg: RunConfig, out: Path, rep: Report) -> None:
    V = cfg.build_potential()
    lam = cfg.lam
    rows = []
    for h in cfg.hs:
        err = wkb.y2_relative_error(V, lam, h)
        est = wkb.asymptotic_constants(V, lam, h, cfg.cut)
        y1, y2 = wkb.wkb_pair(V, lam, h, np.linspace(V.a, V.b, 101))
        w = wkb.wkb_wronskian(y1, y2)
        rep.check(float(np.max(np.abs(w * h / 2 - 1))) < 1e-10, "wkb_wronskian", h=h)
        rows.append((h, err, abs(est.kappa), est.phi_norm_sq, est.product))
        rep.say(f"h={h!r}: max rel err y2 {err:.6g}, |kappa| {abs(est.kappa):.6g}, "
                f"||phi||^2 {est.phi_norm_sq:.6g}, product {est.product:.6g}")
    wkb.write_diagnostics_csv(rows, out / "wkb.csv")
    hs = sorted(rows)
    for (h1, e1, *_), (h2, e2, *_) in zip(hs, hs[1:]):
        if abs(h2 / h1 - 2) < 1e-9:
            ratio = e2 / e1
            rep.check(1.6 <= ratio <= 2.4, "wkb_error_halving", h=h1, ratio=ratio)


COMMANDS = {
    "map": cmd_map, "blowup": cmd_blowup, "bound": cmd_bound, "eigs": cmd_eigs,
    "rankone": cmd_rankone, "twist": cmd_twist, "wkbcheck": cmd_wkbcheck,
}


def run(cfg: RunConfig, out: Path) -> Report:
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(cfg.to_text(), encoding="utf-8")
    rep = Report()
    if cfg.dump_matrix:
        V = cfg.build_potential()
        assemble(V, cfg.hs[0], _grid(cfg, V)).dump(out / cfg.dump_matrix)
    try:
        COMMANDS[cfg.subcommand](cfg, out, rep)
    except (ValueError, ArithmeticError) as exc:
        # numerical preconditions (eigenvalue hit, lam inside Phi, ...) are
        # reported as failures rather than tracebacks
        rep.say(f"error: {exc}")
        rep.check(False, "error", message=str(exc), kind=type(exc).__name__)
    fail_path = out / "failures.json"
    if rep.failures:
        fail_path.write_text(json.dumps(rep.failures, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    elif fail_path.exists():
        fail_path.unlink()
    return rep


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pseudolab", description=__doc__.splitlines()[0])
    ap.add_argument("subcommand", choices=SUBCOMMANDS)
    ap.add_argument("--config", type=Path, help="key=value file (one per line, # comments)")
    ap.add_argument("--out", type=Path, default=Path("out"))
    ap.add_argument("--seed", type=int)
    ap.add_argument("--threads", type=int)
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                    help="override a configuration key (repeatable)")
    ap.add_argument("--dump-matrix", metavar="FILE", help="also dump the assembled matrix for the first h")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        text = args.config.read_text(encoding="utf-8") if args.config else ""
        for item in args.set:
            text += item + "\n"
        cfg = RunConfig.from_text(text, subcommand=args.subcommand, seed=args.seed, threads=args.threads,
                                  dump_matrix=args.dump_matrix)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    rep = run(cfg, args.out)
    if rep.failures:
        json.dump(rep.failures, sys.stderr, sort_keys=True)
        sys.stderr.write("\n")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
