"""Cone programs: reformulation soundness, solves with known optima, status mapping and text dumps."""
import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from broadbeam import socp
from broadbeam.errors import DimensionMismatch, NonpositiveFloor
from broadbeam.response import steering_vector, wng_matrix

from conftest import example_geometry


def feasible(prog, z, tol=1e-12):
    r = prog.residuals(z)
    return max(r["equality"], r["linear"], r["cone"]) <= tol


# --------------------------------------------------------------------------
# soundness: the conic rows hold exactly when the modelled inequality holds

def test_complex_linf_epigraph_soundness():
    rng = np.random.default_rng(11)
    for _ in range(100):
        m, n = rng.integers(1, 6), rng.integers(1, 5)
        rows = rng.standard_normal((m, n)) + 1j * rng.standard_normal((m, n))
        rhs = rng.standard_normal(m) + 1j * rng.standard_normal(m)
        prog = socp.ConeProgram(n)
        t = int(prog.add_variables(1)[0])
        socp.add_complex_linf_epigraph(prog, rows, rhs, t, cols=np.arange(n))
        z = rng.standard_normal(n)
        worst = np.max(np.abs(rows @ z - rhs))
        assert feasible(prog, np.r_[z, worst * (1 + 1e-9) + 1e-12])
        assert not feasible(prog, np.r_[z, worst * (1 - 1e-6)], tol=0.0)


def test_real_linf_soundness_with_offset_bound():
    rng = np.random.default_rng(12)
    for _ in range(100):
        m, n = rng.integers(1, 6), rng.integers(1, 5)
        R, d = rng.standard_normal((m, n)), rng.standard_normal(m)
        off = rng.uniform(0, 1)
        prog = socp.ConeProgram(n)
        rho = int(prog.add_variables(1)[0])
        socp.add_real_linf(prog, R, d, (rho, off), cols=np.arange(n))
        z = rng.standard_normal(n)
        need = np.max(np.abs(R @ z + d)) - off
        assert feasible(prog, np.r_[z, need + 1e-9])
        assert not feasible(prog, np.r_[z, need - 1e-6], tol=0.0)


def test_wng_cone_soundness():
    rng = np.random.default_rng(13)
    geom = example_geometry()
    N, L = 7, 5
    for _ in range(100):
        w, floor = rng.uniform(0.3, 2.8), rng.uniform(0.1, 3.0)
        prog = socp.ConeProgram(N * L)
        A = wng_matrix(N, L, w)
        g = steering_vector(geom, L, w, np.pi / 2)
        socp.add_wng_cone(prog, A, g, 0.0, w, floor)
        x = rng.standard_normal(N * L)
        lhs = np.sqrt(floor) * np.linalg.norm(A @ x)
        rhs = np.real(g @ x)
        assert feasible(prog, x, tol=1e-12 * (1 + abs(rhs))) == (lhs <= rhs + 1e-12 * (1 + abs(rhs)))


def test_builders_validate_input():
    prog = socp.ConeProgram(3)
    with pytest.raises(DimensionMismatch):
        socp.add_complex_linf_epigraph(prog, np.ones((2, 3)), np.ones(3), 1.0)
    with pytest.raises(NonpositiveFloor):
        socp.add_wng_cone(prog, np.ones((1, 3)), np.ones(3), 0.0, 1.0, 0.0)
    with pytest.raises(DimensionMismatch):
        socp.add_wng_cone(prog, np.ones((1, 3)), np.ones(2), 0.0, 1.0, 1.0)


def test_sparse_and_dense_blocks_agree():
    rng = np.random.default_rng(14)
    F = rng.standard_normal((6, 4))
    F[np.abs(F) < 0.8] = 0.0
    g = rng.standard_normal(6)
    a, b = socp.ConeProgram(4), socp.ConeProgram(4)
    a.add_soc(F, g, 3)
    b.add_soc(sp.csr_matrix(F), g, 3)
    assert socp.dump_program(a) == socp.dump_program(b)
    z = rng.standard_normal(4)
    assert a.residuals(z) == b.residuals(z)


# --------------------------------------------------------------------------
# solves with known optima

def test_chebyshev_center_of_points():
    # min t s.t. |z - p_i| <= t for complex points; optimum is the smallest enclosing circle
    pts = np.array([0.0, 2.0, 1.0 + 1.0j])
    prog = socp.ConeProgram(2)
    t = int(prog.add_variables(1)[0])
    prog.set_objective(t)
    rows = np.tile([1.0, 1j], (3, 1))
    socp.add_complex_linf_epigraph(prog, rows, pts, t, cols=np.arange(2))
    out = socp.solve(prog)
    assert out.status == socp.OPTIMAL
    assert abs(out.objective - 1.0) < 1e-7
    # the objective is sqrt(1 + y^2) along the optimal line, so y is only fixed to about sqrt(tol)
    assert np.allclose(out.x[:2], [1.0, 0.0], atol=1e-4)


def test_linf_regression_against_lp_oracle():
    from scipy.optimize import linprog
    rng = np.random.default_rng(15)
    for _ in range(5):
        A, b = rng.standard_normal((12, 3)), rng.standard_normal(12)
        prog = socp.ConeProgram(3)
        t = int(prog.add_variables(1)[0])
        prog.set_objective(t)
        socp.add_real_linf(prog, A, -b, t, cols=np.arange(3))
        out = socp.solve(prog)
        # same problem as an LP for scipy's HiGHS
        c = np.r_[np.zeros(3), 1.0]
        Aub = np.block([[A, -np.ones((12, 1))], [-A, -np.ones((12, 1))]])
        ref = linprog(c, A_ub=Aub, b_ub=np.r_[b, -b], bounds=[(None, None)] * 4)
        assert out.status == socp.OPTIMAL and abs(out.objective - ref.fun) < 1e-7


def test_equality_and_norm_ball():
    # min -z0 - z1 s.t. ||z|| <= 1, z0 = z1  ->  z = (1, 1)/sqrt 2
    prog = socp.ConeProgram(2)
    prog.c[:] = -1.0
    prog.add_equality(np.array([[1.0, -1.0]]), np.zeros(1))
    prog.add_soc(np.vstack([np.zeros(2), np.eye(2)]), np.array([1.0, 0.0, 0.0]), 3)
    out = socp.solve(prog)
    assert out.status == socp.OPTIMAL
    assert np.allclose(out.x, np.sqrt(0.5), atol=1e-7)
    assert out.residuals["gap"] < 1e-6


def test_infeasible_program_reports_certificate_blocks():
    prog = socp.ConeProgram(1)
    prog.add_nonneg(np.array([[1.0]]), np.array([-1.0]), tag="lower")     # z >= 1
    prog.add_nonneg(np.array([[-1.0]]), np.array([0.0]), tag="upper")     # z <= 0
    out = socp.solve(prog)
    assert out.status == socp.INFEASIBLE and out.x is None
    assert set(out.info["blocks"]) == {"lower", "upper"}
    assert abs(sum(out.info["blocks"].values()) - 1.0) < 1e-12


def test_unbounded_is_not_reported_optimal():
    prog = socp.ConeProgram(1)
    prog.c[0] = 1.0
    prog.add_nonneg(np.array([[-1.0]]), np.array([0.0]))                   # z <= 0, minimize z
    assert socp.solve(prog).status != socp.OPTIMAL


# --------------------------------------------------------------------------
# dumps

@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_dump_load_round_trip(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 5))
    prog = socp.ConeProgram(n)
    prog.c[:] = rng.standard_normal(n)
    prog.add_equality(rng.standard_normal((1, n)), rng.standard_normal(1))
    prog.add_nonneg(rng.standard_normal((2, n)), rng.standard_normal(2))
    prog.add_soc(rng.standard_normal((6, n)), rng.standard_normal(6), 3)
    text = socp.dump_program(prog)
    back = socp.load_program(text)
    assert socp.dump_program(back) == text
    z = rng.standard_normal(n)
    assert back.residuals(z) == pytest.approx(prog.residuals(z), rel=0, abs=0)


def test_row_and_cone_counts():
    prog = socp.ConeProgram(2)
    prog.add_soc(np.zeros((6, 2)), np.zeros(6), 3)
    prog.add_nonneg(np.zeros((4, 2)), np.zeros(4))
    assert prog.row_count() == 10 and prog.cone_count() >= 2
