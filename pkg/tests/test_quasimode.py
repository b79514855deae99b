import numpy as np
import pytest

from pseudolab import linalg
from pseudolab.discretize import Grid, assemble
from pseudolab.potential import catalog, parse_potential
from pseudolab.quasimode import (
    SupportError, blowup_sweep, bump, build_quasimode, choose_center, closure_lower_bound,
    quasimode_for, residual_bound, residual_ratio, standard_bump, write_sweep_csv,
)

LIN = catalog("linear-i")
ZERO = catalog("zero")


def fine_grid(V, h):
    return Grid.with_spacing(V, h * h)


def test_bump_shape():
    s = np.linspace(-1.2, 1.2, 241)
    b = bump(s)
    np.testing.assert_array_equal(b, bump(-s))
    assert np.all(b[np.abs(s) > 0.999] < 1e-12)
    assert bump(0.0) == pytest.approx(np.exp(-1))


def test_bump_norms_converged():
    coarse, fine = standard_bump(20_000), standard_bump()
    assert fine.norm == pytest.approx(coarse.norm, rel=1e-9)
    assert fine.k1 == pytest.approx(coarse.k1, rel=1e-6)
    assert fine.k2(1.0) == pytest.approx(2 * fine.norm_d1 / fine.norm)


def test_build_examples():
    q = build_quasimode(ZERO, 0.0, 1.0, 0.5, 0.01, fine_grid(ZERO, 0.01))
    assert q.lam == 1 and q.radius == pytest.approx(0.1)
    assert np.all(q.values[np.abs(q.x) >= 0.1] == 0)
    q = build_quasimode(LIN, 0.5, 0.0, 0.5, 0.01, fine_grid(LIN, 0.01))
    assert q.lam == pytest.approx(0.5j)
    with pytest.raises(SupportError):
        build_quasimode(LIN, 0.95, 0.0, 0.5, 0.01, fine_grid(LIN, 0.01))
    with pytest.raises(SupportError):
        build_quasimode(catalog("example-t5:delta=0.5"), 0.05, 0.0, 0.5, 0.01, Grid(-1, 1, 999))
    with pytest.raises(ValueError):
        build_quasimode(LIN, 0.0, 0.0, 1.5, 0.01, Grid(-1, 1, 99))


def test_empty_support_rejected():
    q = build_quasimode(LIN, 0.001, 0.0, 0.5, 1e-6, Grid(-1, 1, 9))
    with pytest.raises(SupportError):
        residual_ratio(assemble(LIN, 1e-6, Grid(-1, 1, 9)), q)


def test_constant_potential_rate():
    V = parse_potential("2 + i", (-1, 1))
    ratios = []
    for h in (0.1, 0.05):
        g = fine_grid(V, h / 4)
        q = build_quasimode(V, 0.0, 0.0, 0.5, h, g)
        ratios.append(residual_ratio(assemble(V, h, g), q))
        # only the Laplacian term survives: bound is k1 h^(2-2p)
        assert residual_bound(V, q) == pytest.approx(standard_bump().k1 * h)
        assert ratios[-1] <= residual_bound(V, q)
    assert ratios[0] / ratios[1] == pytest.approx(2.0, rel=0.02)


def test_linear_bound_formula():
    h = 0.01
    q = build_quasimode(LIN, 0.0, 1.0, 0.5, h, Grid(-1, 1, 400))
    b = standard_bump()
    assert residual_bound(LIN, q) == pytest.approx(b.k1 * 0.01 + b.k2(1.0) * 0.1 + 0.1)


def test_linear_sweep_rate_and_certificate():
    r = {}
    for h in (0.1, 0.025):
        g = fine_grid(LIN, h)
        q = build_quasimode(LIN, 0.0, 1.0, 0.5, h, g)
        A = assemble(LIN, h, g)
        r[h] = residual_ratio(A, q)
        assert r[h] <= residual_bound(LIN, q) * 1.1
        if g.n_interior <= 1000:
            assert 1 / r[h] <= linalg.resolvent_norm(A, q.lam) * (1 + 1e-10)
    # leading terms h^(1-p) and h^p both scale like h^(1/2)
    assert 1.6 <= r[0.1] / r[0.025] <= 2.4


def test_choose_center_projection():
    c, gamma, mismatch = choose_center(LIN, 1 + 0.3j)
    assert c == pytest.approx(0.3, abs=2e-3) and gamma == pytest.approx(1, abs=1e-6)
    assert mismatch < 2e-3
    with pytest.raises(ValueError):
        choose_center(LIN, -1.0)
    q = quasimode_for(LIN, 1 + 0.3j, 0.5, 0.01, Grid(-1, 1, 200))
    assert q.lam == 1 + 0.3j


def test_sweep_monotone_on_catalog(tmp_path):
    hs = [0.2, 0.1, 0.05, 0.025]
    for name, lam in (("linear-i", 1.0), ("example-t5:delta=0.5", 1 + 1j), ("zero", 2.0)):
        rows = blowup_sweep(catalog(name), lam, hs)
        ratios = [row.ratio for row in rows]
        assert all(a > b for a, b in zip(ratios, ratios[1:])), name
        assert all(row.ratio <= row.bound * 1.1 for row in rows)
    write_sweep_csv(rows, tmp_path / "s.csv")
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "h,ratio,bound,lower_bound_resolvent" and len(lines) == 5


def test_closure_extension():
    h = 0.05
    g = Grid(-1, 1, 400)
    A = assemble(LIN, h, g)
    q = build_quasimode(LIN, 0.0, 1.0, 0.5, h, g)
    cert = 1 / residual_ratio(A, q)
    delta = 0.01
    for w in (q.lam + delta, q.lam - 1j * delta, q.lam + delta * np.exp(0.7j)):
        assert linalg.resolvent_norm(A, w) >= closure_lower_bound(cert, delta) * (1 - 1e-12)
    assert closure_lower_bound(10.0, 0.0) == 10.0
