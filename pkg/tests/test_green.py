import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from pseudolab import green, linalg
from pseudolab.discretize import Grid, assemble, assemble_split
from pseudolab.potential import PhiRegion, catalog, dist_to_phi, min_piece_distance, parse_potential

LIN = catalog("linear-i")
UNIT0 = parse_potential("0", (0, 1))


def f_at(sol, x0):
    lf, _ = sol.at(x0)
    return complex(np.exp(lf))


def test_sinh_closed_form():
    s = green.integrate_solution(UNIT0, -1.0, 1.0, "left")
    assert f_at(s, 1.0) == pytest.approx(math.sinh(1.0), rel=1e-8)


def test_dirichlet_eigenfunction():
    s = green.integrate_solution(UNIT0, math.pi ** 2, 1.0, "left", dx=1e-3)
    assert abs(f_at(s, 1.0)) < 1e-10
    assert f_at(s, 0.5) == pytest.approx(1 / math.pi, rel=1e-10)


def test_against_solve_ivp():
    h, lam = 0.2, -1.0
    rhs = lambda x, y: [y[1], (1j * x - lam) * y[0] / h ** 2]
    ref = solve_ivp(rhs, (-1, 1), [0j, 1 + 0j], method="DOP853", rtol=1e-12, atol=1e-14)
    s = green.integrate_solution(LIN, lam, h, "left")
    assert f_at(s, 1.0) == pytest.approx(complex(ref.y[0, -1]), rel=1e-8)


def test_richardson_fourth_order():
    h = 0.05
    vals = [f_at(green.integrate_solution(LIN, -1.0, h, "left", dx=h / k), 1.0) for k in (10, 20, 40)]
    ratio = abs(vals[0] - vals[1]) / abs(vals[1] - vals[2])
    assert ratio == pytest.approx(16, rel=0.1)


def test_rescaling_ledger():
    s = green.integrate_solution(UNIT0, -1.0, 0.002, "left")
    assert len(s.ledger) > 0
    assert all(np.all(np.atleast_1d(f) >= 1) for _, f in s.ledger)
    # exact log growth of sinh(x / h)
    expected = 1 / 0.002 - math.log(2) + math.log(0.002)
    assert s.log_f()[-1].real == pytest.approx(expected, rel=1e-8)


def test_vectorised_matches_scalar():
    lams = np.array([-1.0, 0.5 + 0.2j, 3.0])
    vec = green.integrate_solution(LIN, lams, 0.1, "right")
    for j, lam in enumerate(lams):
        one = green.integrate_solution(LIN, lam, 0.1, "right")
        np.testing.assert_allclose(vec.log_f()[:, j], one.log_f(), rtol=1e-12)


def test_step_rule_and_errors():
    with pytest.raises(green.StepSizeError):
        green.integrate_solution(LIN, -1.0, 0.1, dx=0.02)
    with pytest.raises(ValueError):
        green.integrate_solution(LIN, -1.0, 0.1, from_end="middle")
    mesh = green.ode_mesh(catalog("example-t5:delta=0.5"), -1, 1, 0.03, extra=(0.123,))
    assert 0.0 in mesh and 0.123 in mesh and np.max(np.diff(mesh)) <= 0.03 + 1e-15


def test_green_closed_form_and_symmetry():
    G = green.green_kernel(UNIT0, -1.0, 1.0)
    x = G.u.x
    rng = np.random.default_rng(0)
    for _ in range(100):
        a, b = rng.choice(x, 2)
        lo, hi = min(a, b), max(a, b)
        exact = -math.sinh(lo) * math.sinh(hi - 1) / math.sinh(1)
        assert G(a, b) == pytest.approx(exact, rel=1e-8, abs=1e-14)
        assert abs(G(a, b) - G(b, a)) <= 1e-10 * max(abs(G(a, b)), 1e-300)


def test_green_symmetry_complex_potential():
    G = green.green_kernel(LIN, 0.3 + 0.1j, 0.1)
    xs = G.u.x[5:-5:40]
    M = G.matrix(xs)
    np.testing.assert_allclose(M, M.T, rtol=1e-10, atol=1e-300)


def test_wronskian_constant():
    G = green.green_kernel(LIN, -1.0, 0.1)
    assert green.wronskian_spread(G.u, G.v) < 1e-8


def test_apply_solves_ode():
    h, lam = 0.1, -1.0
    G = green.green_kernel(LIN, lam, h)
    m = G.u.x
    f = G.apply(np.ones(m.size), m)
    dx = m[1] - m[0]
    f2 = (f[2:] - 2 * f[1:-1] + f[:-2]) / dx ** 2
    res = -h * h * f2 + (1j * m[1:-1] - lam) * f[1:-1] - 1
    assert np.max(np.abs(res)) <= 1e-4
    assert abs(f[0]) < 1e-14 and abs(f[-1]) < 1e-14


def test_eigenvalue_hit():
    with pytest.raises(green.EigenvalueHit):
        green.green_kernel(UNIT0, math.pi ** 2 * 0.01, 0.1)


def test_kernel_norm_matches_matrix_resolvent():
    h, lam = 0.1, -1.0
    G = green.green_kernel(LIN, lam, h)
    xs = G.u.x
    dx = xs[1] - xs[0]
    kernel = linalg.spectral_norm(G.matrix(xs)) * dx
    matrix = linalg.resolvent_norm(assemble(LIN, h, Grid(-1, 1, 1999)), lam)
    assert kernel == pytest.approx(matrix, rel=0.03)


def test_split_wronskian_signs():
    S = green.split_kernel(LIN, -1.0, 0.1, 0.0)
    assert S.w_left / S.w_full == pytest.approx(-1, abs=1e-8)
    assert S.w_right / S.w_full == pytest.approx(1, abs=1e-8)
    assert S.spread_left < 1e-8 and S.spread_right < 1e-8


def test_rank_one_direct():
    V = parse_potential("0", (-1, 1))
    h, lam = 0.5, -1.0
    S = green.split_kernel(V, lam, h, 0.0)
    G = green.green_kernel(V, lam, h, (0.0,))
    K = green.rank_one_difference(V, lam, h, 0.0)
    xs = G.u.x[::5]
    D = S.matrix(xs) - G.matrix(xs)
    assert np.max(np.abs(D - K.matrix(xs))) < 1e-6 * np.max(np.abs(D))
    i0 = np.argmin(np.abs(K.phi_x))
    assert K.phi[i0] == 1.0


@pytest.mark.parametrize("name,lam", [("zero", -1.0), ("linear-i", -1.0), ("example-t5:delta=0.5", 1.0)])
def test_rank_one_property(name, lam):
    V = catalog(name)
    S = green.split_kernel(V, lam, 0.1, 0.0)
    G = green.green_kernel(V, lam, 0.1, (0.0,))
    xs = G.u.x[1:-1][::10]
    sv = np.linalg.svd(S.matrix(xs) - G.matrix(xs), compute_uv=False)
    assert sv[1] <= 1e-8 * sv[0]


def test_rank_one_scaling():
    hs = [0.2, 0.1, 0.05, 0.025]
    ks = [green.rank_one_difference(LIN, -1.0, h, 0.0) for h in hs]
    assert 1.8 <= linalg.loglog_slope(hs, [k.norm for k in ks]) <= 2.2
    # the operator itself carries 1/h^2 and stays of order one
    assert abs(linalg.loglog_slope(hs, [k.operator_norm for k in ks])) < 0.1


def test_rank_one_operator_norm_matches_matrices():
    h, lam = 0.1, -1.0
    g = Grid(-1, 1, 1999)
    A, As = assemble(LIN, h, g), assemble_split(LIN, h, g, [0.0])
    I = np.eye(g.n_interior)
    keep = np.setdiff1d(np.arange(g.n_interior), As.interior_dirichlet)
    Rs = np.zeros((g.n_interior, g.n_interior), dtype=complex)
    Rs[np.ix_(keep, keep)] = np.linalg.inv(As.entries - lam * np.eye(As.dim))
    diff = np.linalg.norm(Rs - np.linalg.inv(A.entries - lam * I), 2)
    K = green.rank_one_difference(LIN, lam, h, 0.0)
    assert K.operator_norm == pytest.approx(diff, rel=0.02)


def test_split_bound_chain():
    V = catalog("example-t5:delta=0.5")
    h, lam = 0.1, 1.0
    g = Grid.for_potential(V, 400)
    As = assemble_split(V, h, g, [0.0])
    per_block = max(1 / PhiRegion.from_potential(V.restrict(lo, hi)).dist_to_conv_phi(lam)
                    for lo, hi in ((-1, 0), (0, 1)))
    split = linalg.resolvent_norm(As, lam)
    assert split <= per_block
    full = linalg.resolvent_norm(assemble(V, h, g), lam)
    K = green.rank_one_difference(V, lam, h, 0.0)
    assert full <= split + K.operator_norm + 1e-6


def test_partition_refinement():
    V = catalog("example-t5:delta=0.5")
    region = PhiRegion.from_potential(V)
    gaps = [abs(min_piece_distance(V, 1.0, k) - region.dist_to_phi(1.0)) for k in (4, 8, 16)]
    # the pieces of this potential already have convex Phi, so the gap is zero at once
    assert max(gaps) < 1e-6
    # an arc bulging towards lam: finer pieces have flatter hulls
    W = parse_potential("exp(i*x)", (-1, 1))
    d = dist_to_phi(0.7, PhiRegion.from_potential(W))
    assert d == pytest.approx(0.3, abs=1e-6)
    gaps = [abs(min_piece_distance(W, 0.7, k) - d) for k in (4, 8, 16)]
    assert gaps[0] > gaps[1] > gaps[2]


def test_shooting_free():
    V = parse_potential("0", (0, math.pi))
    eigs = green.shooting_eigenvalues(V, 1.0, (0.5, 10.0), dx=2e-3)
    got = [e.lam for e in eigs]
    assert len(got) == 3
    for z, k in zip(got, (1, 4, 9)):
        assert abs(z - k) < 1e-8


def test_shooting_example_t5(tmp_path):
    V = catalog("example-t5:delta=0.5")
    eigs = green.shooting_eigenvalues(V, 0.1, (7.0, 8.0))
    real = [e for e in eigs if abs(e.lam.imag) < 1e-6 and e.lam.real > 0]
    assert [round(e.lam.real, 4) for e in real] == [7.2977, 7.7884]
    green.write_eigs_csv(eigs, tmp_path / "e.csv")
    assert (tmp_path / "e.csv").read_text().startswith("re,im,abs_miss,h\n")
    with pytest.raises(ValueError):
        green.shooting_eigenvalues(V, 0.1, (1.0, 1.0))
