import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from convexfem.ipm import (InvalidProgramError, IpmSettings, canonicalize, kkt_residuals, recover, solve)
from convexfem.program import ProgramBuilder, StandardConicProgram
from oracles import group_problem_program, projected_gradient_oracle, random_group_problem


def lp_example():
    B = ProgramBuilder()
    B.add_vars(2, lx=0.0, cost=-1.0)
    B.add_rows(1, [0, 0], [0, 1], [1.0, 1.0], -np.inf, 1.0)
    return B.build()


def soc_example():
    B = ProgramBuilder()
    B.add_vars(3, cost=[1.0, 0, 0])
    B.add_cones("QUAD", [0], 3)
    B.add_rows(2, [0, 1], [1, 2], [1.0, 1.0], [3, 4], [3, 4])
    return B.build()


def rquad_example():
    B = ProgramBuilder()
    B.add_vars(3, cost=[1.0, 0, 0])
    B.add_cones("RQUAD", [0], 3)
    B.add_rows(2, [0, 1], [1, 2], [1.0, 1.0], [1, 3], [1, 3])
    return B.build()


def test_lp():
    r = solve(lp_example())
    assert r.status == "optimal" and r.optimal
    assert r.objective == pytest.approx(-1.0, abs=1e-7)
    assert r.x.sum() == pytest.approx(1.0, abs=1e-7)


def test_socp():
    r = solve(soc_example())
    assert r.status == "optimal"
    assert r.objective == pytest.approx(5.0, abs=1e-7)
    np.testing.assert_allclose(r.x, [5, 3, 4], atol=1e-6)


def test_rquad():
    r = solve(rquad_example())
    assert r.status == "optimal"
    assert r.x[0] == pytest.approx(4.5, abs=1e-6)


def test_nonneg_cone_and_bounds_agree():
    B = ProgramBuilder()
    B.add_vars(2, cost=-1.0)
    B.add_cones("NONNEG", [0, 1], 1)
    B.add_rows(1, [0, 0], [0, 1], [1.0, 1.0], -np.inf, 1.0)
    assert solve(B.build()).objective == pytest.approx(solve(lp_example()).objective, abs=1e-7)


def test_infeasible_and_unbounded():
    B = ProgramBuilder()
    B.add_vars(1, lx=1.0, ux=np.inf, cost=1.0)
    B.add_rows(1, [0], [0], [1.0], -np.inf, 0.0)
    r = solve(B.build())
    assert r.status == "infeasible" and r.objective == np.inf
    B = ProgramBuilder()
    B.add_vars(1, lx=0.0, cost=-1.0)
    r = solve(B.build())
    assert r.status == "unbounded" and r.objective == -np.inf


def test_max_iter_returns_best_iterate():
    r = solve(soc_example(), IpmSettings(max_iter=2))
    assert r.status == "max_iter"
    assert np.all(np.isfinite(r.x)) and r.iterations == 2


def test_iteration_log():
    lines = []
    solve(lp_example(), IpmSettings(log=lines.append))
    assert "pres" in lines[0] and len(lines) >= 3
    assert all(len(l.split()) == 8 for l in lines[1:])


@pytest.mark.parametrize("kw", [dict(feas_tol=0), dict(max_iter=0), dict(step_fraction=1.0), dict(static_reg=-1)])
def test_settings_validation(kw):
    with pytest.raises(ValueError):
        IpmSettings(**kw)


def _single_row_program(bl, bu, lx=-np.inf, ux=np.inf):
    B = ProgramBuilder()
    B.add_vars(2, lx=lx, ux=ux, cost=[1.0, 1.0])
    B.add_rows(1, [0, 0], [0, 1], [1.0, -1.0], bl, bu)
    return B.build()


def test_canonicalize_ranged_row_two_slacks():
    eps = 1e-6
    can = canonicalize(_single_row_program(-eps, eps))
    assert can.n - 2 == 2 and can.nlin == 2


def test_canonicalize_equality_row_no_slack():
    can = canonicalize(_single_row_program(0.5, 0.5))
    assert can.n == 2 and can.nlin == 0 and can.A.shape[0] == 1


def test_canonicalize_free_variable_untouched():
    B = ProgramBuilder()
    B.add_vars(1, cost=1.0)
    can = canonicalize(B.build())
    assert (can.n, can.nfree, can.A.shape[0]) == (1, 1, 0)


def test_canonicalize_one_sided_row_one_slack():
    can = canonicalize(_single_row_program(-np.inf, 2.0))
    assert can.n == 3 and can.nlin == 1


def test_canonicalize_rejects_crossed_bounds():
    with pytest.raises(InvalidProgramError):
        canonicalize(_single_row_program(1.0, 0.0))
    with pytest.raises(InvalidProgramError):
        canonicalize(_single_row_program(0.0, 1.0, lx=2.0, ux=1.0))


def test_canonicalize_recovery_roundtrip():
    B = ProgramBuilder()
    # x0 + x1 >= -1 keeps the cost 3 x0 + 2 x1 bounded below at x = (0, -1)
    B.add_vars(4, lx=[0, -np.inf, 1, -2], ux=[np.inf, 3, 1, 5], cost=[3, 2, 3, 4])
    B.add_rows(2, [0, 0, 1, 1], [0, 1, 2, 3], [1.0, 1, 1, -1], [-1, 0], [2, 0])
    prog = B.build()
    can = canonicalize(prog)
    r = solve(prog)
    assert r.status == "optimal"
    np.testing.assert_allclose(r.x, [0, -1, 1, 1], atol=1e-6)
    xc = np.linalg.lstsq(can.recovery.T.toarray(), r.x - can.recovery.shift, rcond=None)[0]
    x, y = recover(can, xc, np.zeros(can.A.shape[0]))
    np.testing.assert_allclose(x, r.x, atol=1e-9)
    assert y.shape == (2,)


def test_kkt_residuals_examples():
    prog = lp_example()
    r = solve(prog)
    p, d, g, c = kkt_residuals(prog, r.x, r.y)
    assert max(p, d, g, c) <= 1e-8
    x = r.x.copy()
    x[0] += 1e-3
    p2, *_ = kkt_residuals(prog, x, r.y)
    assert p2 == pytest.approx(1e-3, rel=1e-3)
    rng = np.random.default_rng(0)
    out = kkt_residuals(prog, rng.normal(size=2) - 2, rng.normal(size=1))
    assert out[0] > 0 and all(np.isfinite(out))


def test_kkt_residuals_cone_violation():
    prog = soc_example()
    p, d, g, c = kkt_residuals(prog, np.array([4.0, 3.0, 4.0]), np.zeros(2))
    assert c == pytest.approx(1.0) and p >= 1.0


def test_result_fields():
    prog = soc_example()
    r = solve(prog)
    assert r.x.shape == (3,) and r.y.shape == (2,)
    assert set(r.residuals) == {"primal", "dual", "gap"}
    assert r.residuals["primal"] <= 1e-8 and r.residuals["dual"] <= 1e-8 and r.residuals["gap"] <= 1e-8
    np.testing.assert_allclose(r.cone_slacks + r.bound_duals, prog.c - prog.A.T @ r.y, atol=1e-12)


def test_maximize_sense():
    B = ProgramBuilder()
    B.add_vars(2, lx=0.0, cost=1.0)
    B.add_rows(1, [0, 0], [0, 1], [1.0, 2.0], -np.inf, 2.0)
    prog = B.build("maximize")
    prog.c = -prog.c
    r = solve(prog)
    assert r.objective == pytest.approx(2.0, abs=1e-7)


def test_dense_column_split():
    rng = np.random.default_rng(3)
    m, n = 300, 40
    A = sp.random(m, n, density=0.02, random_state=3, format="csr")
    A = sp.hstack([A, sp.csr_matrix(np.ones((m, 1)))]).tocsr()
    x0 = rng.uniform(0.5, 1.5, n + 1)
    b = A @ x0
    prog = StandardConicProgram(rng.uniform(0.1, 1, n + 1), A, b, b, np.zeros(n + 1), np.full(n + 1, np.inf),
                                np.zeros((0, 3), dtype=np.int64))
    dense = solve(prog, IpmSettings(dense_threshold=0.2))
    plain = solve(prog, IpmSettings(dense_threshold=2.0))
    assert dense.status == plain.status == "optimal"
    assert dense.objective == pytest.approx(plain.objective, rel=1e-7)


def test_determinism():
    prog = group_problem_program(random_group_problem(np.random.default_rng(9)))
    a = solve(prog)
    b = solve(prog)
    np.testing.assert_array_equal(a.x, b.x)
    np.testing.assert_array_equal(a.y, b.y)
    assert [h["pobj"] for h in a.history] == [h["pobj"] for h in b.history]


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2 ** 31 - 1), alpha=st.floats(0.1, 10.0))
def test_scaling_invariance(seed, alpha):
    prog = group_problem_program(random_group_problem(np.random.default_rng(seed)))
    r1 = solve(prog)
    prog.c = alpha * prog.c
    r2 = solve(prog)
    assert r1.status == r2.status == "optimal"
    np.testing.assert_allclose(r2.x, r1.x, atol=1e-6 * (1 + np.abs(r1.x).max()))
    assert r2.objective == pytest.approx(alpha * r1.objective, rel=1e-6, abs=1e-8)


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2 ** 31 - 1))
def test_weak_duality_along_iterates(seed):
    prog = group_problem_program(random_group_problem(np.random.default_rng(seed)))
    r = solve(prog)
    tol = 1e-7
    for h in r.history:
        if h["pres"] <= tol and h["dres"] <= tol:
            assert h["pobj"] >= h["dobj"] - tol * (1 + abs(h["pobj"]))
    # the final pair certifies its objective from both sides
    assert r.history[-1]["pobj"] >= r.history[-1]["dobj"] - 1e-8 * (1 + abs(r.objective))


@pytest.mark.parametrize("seed", range(10))
def test_random_socp_matches_first_order_oracle(seed):
    p = random_group_problem(np.random.default_rng(100 + seed))
    prog = group_problem_program(p)
    assert prog.num_vars <= 30
    r = solve(prog)
    assert r.status == "optimal" and r.residuals["gap"] <= 1e-8
    _, fo = projected_gradient_oracle(p)
    assert abs(r.objective - fo) <= 1e-5 * max(1.0, abs(fo))


def test_pinned_cone_coordinate_becomes_one_equality():
    # min t  s.t.  2 t s >= w^2, s pinned to 1, w pinned to 2: t = 2
    B = ProgramBuilder()
    B.add_vars(3, lx=[-np.inf, 1, 2], ux=[np.inf, 1, 2], cost=[1, 0, 0])
    B.add_cones("RQUAD", [0], 3)
    prog = B.build()
    can = canonicalize(prog)
    assert can.nlin == 0 and can.A.shape[0] == 2
    r = solve(prog)
    assert r.status == "optimal"
    assert r.objective == pytest.approx(2.0, abs=1e-7)
