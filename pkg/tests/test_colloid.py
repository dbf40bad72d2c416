import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from opjac import opexpr as ox
from opjac.fdjac import fd_jacobian, max_relative_error
from opjac.problems import REGISTRY
from opjac.problems.colloid import (
    BLOCK_COLS,
    BLOCK_ROWS,
    Colloid,
    ColloidConfig,
    SurfaceConcentrationError,
    ZetaConvergenceError,
    colloid_jacobian,
    colloid_residual,
    zeta_sensitivities,
    zeta_solve,
)


def small(**kw):
    base = dict(n_r=10, n_t=8, e_applied=2.0, v=0.2)
    base.update(kw)
    return Colloid(ColloidConfig(**base))


# --- zeta closure --------------------------------------------------------------------


def test_zeta_trivial_cases():
    assert zeta_solve(np.array([0.0]), np.array([3.0]), 1.0)[0] == 0.0
    psi = np.array([-4.0, 0.5, 7.0])
    np.testing.assert_array_equal(zeta_solve(psi, np.ones(3), 0.0), psi)


@given(st.floats(-20, 20), st.floats(0.1, 10), st.floats(0, 5))
def test_zeta_satisfies_closure(psi, c_s, delta):
    z = zeta_solve(np.array([psi]), np.array([c_s]), delta)[0]
    assert abs(z + 2 * delta * np.sqrt(c_s) * np.sinh(z / 2) - psi) <= 1e-9
    # the closure is monotone in zeta, so zeta carries the sign of psi and is no larger
    assert abs(z) <= abs(psi) + 1e-12 and z * psi >= 0


def test_zeta_sensitivities_match_finite_differences():
    psi = np.array([-3.0, 0.2, 5.0])
    c = np.array([0.5, 2.0, 1.3])
    delta, h = 1.5, 1e-6
    z = zeta_solve(psi, c, delta)
    dz_dpsi, dz_dc = zeta_sensitivities(z, c, delta)
    # the drive is v - psi_s + E cos(theta), so raising psi_s lowers the drive
    fd_psi = (zeta_solve(psi - h, c, delta) - zeta_solve(psi + h, c, delta)) / (2 * h)
    fd_c = (zeta_solve(psi, c + h, delta) - zeta_solve(psi, c - h, delta)) / (2 * h)
    np.testing.assert_allclose(dz_dpsi, fd_psi, rtol=1e-6)
    np.testing.assert_allclose(dz_dc, fd_c, rtol=1e-6, atol=1e-9)


def test_zeta_errors():
    with pytest.raises(SurfaceConcentrationError):
        zeta_solve(np.array([1.0, 1.0]), np.array([1.0, -0.1]), 1.0)
    with pytest.raises(ZetaConvergenceError) as info:
        zeta_solve(np.array([0.0, 40.0]), np.array([1.0, 1.0]), 5.0, max_iters=2)
    assert list(info.value.components) == [1]


def test_residual_rejects_non_positive_surface_concentration():
    prob = small()
    u = prob.initial()
    u[prob.surf[3]] = 0.0
    with pytest.raises(SurfaceConcentrationError):
        prob.residual(u)


# --- residual -------------------------------------------------------------------------


@pytest.mark.parametrize("n_r,n_t", [(10, 8), (30, 30)])
def test_quiescent_state_is_exact(n_r, n_t):
    prob = Colloid(ColloidConfig(n_r=n_r, n_t=n_t, e_applied=0.0))
    res = prob.residual(prob.initial())
    assert np.abs(res).max() <= 1e-12


@pytest.mark.parametrize(
    "n_r,n_t,inf_norm,two_norm",
    [(30, 30, 0.997394444276136, 3.8707070015509037), (10, 8, 0.9796580170421394, 1.9988245097102666)],
)
def test_frozen_residual_at_unit_field(n_r, n_t, inf_norm, two_norm):
    prob = Colloid(ColloidConfig(n_r=n_r, n_t=n_t, e_applied=1.0))
    res = prob.residual(prob.initial())
    assert np.abs(res).max() == pytest.approx(inf_norm, rel=1e-9)
    assert np.linalg.norm(res) == pytest.approx(two_norm, rel=1e-9)


def test_shapes_and_layout():
    prob = small()
    u = prob.initial()
    res = prob.residual(u)
    n_i, n_t = prob.grid.n_interior, prob.cfg.n_t
    assert res.size == 2 * n_i + 2 * n_t == u.size
    rows = prob.row_slices()
    assert [rows[k] for k in BLOCK_ROWS] == sorted(rows.values(), key=lambda s: s.start)
    assert rows["H2"].stop == res.size
    with pytest.raises(ValueError):
        prob.split(np.ones(3))
    np.testing.assert_array_equal(colloid_residual(u, prob.cfg), res)


# --- Jacobian --------------------------------------------------------------------------


def test_jacobian_matches_finite_differences():
    entry = REGISTRY["colloid"]
    prob = entry.family(entry.verify_config({}))(2.0)
    for u in entry.verify_states(prob):
        jac = prob.jacobian(u)
        assert sp.issparse(jac)
        assert max_relative_error(jac, fd_jacobian(prob.residual, u)) <= 1e-6


def test_jacobian_blocks_assemble_to_full_matrix():
    prob = small()
    u = REGISTRY["colloid"].verify_states(prob)[1]
    blocks = prob.jacobian_blocks(u)
    full = colloid_jacobian(u, prob.cfg).toarray()
    rows, cols = prob.row_slices(), prob.col_slices()
    for r in BLOCK_ROWS:
        for c in BLOCK_COLS:
            np.testing.assert_array_equal(blocks[(r, c)].toarray(), full[rows[r], cols[c]])


def test_structural_zero_blocks():
    prob = small()
    u = REGISTRY["colloid"].verify_states(prob)[2]
    b = prob.jacobian_blocks(u)
    assert b[("F1", "psi")].nnz == 0
    interior_cols = np.setdiff1d(np.arange(prob.n_f), prob.surf)
    assert not b[("H2", "psi")].toarray()[:, interior_cols].any()
    np.testing.assert_array_equal(b[("F1", "c")].toarray(), prob.grid.lap_f.toarray())


def test_zero_field_concentration_block_is_laplacian():
    prob = small(e_applied=0.0, v=0.0)
    b = prob.jacobian_blocks(prob.initial())
    np.testing.assert_array_equal(b[("F1", "c")].toarray(), prob.grid.lap_f.toarray())
    # with psi = 0 and no field the drift block vanishes
    assert np.abs(b[("F2", "c")].toarray()).max() <= 1e-12


def test_engine_reproduces_bulk_rows():
    prob = small()
    u = REGISTRY["colloid"].verify_states(prob)[1]
    c, psi = prob.split(u)
    env = {"c": c, "psi": psi}
    f1, f2 = prob.bulk_expressions()
    res = prob.residual(u)
    rows = prob.row_slices()
    np.testing.assert_allclose(ox.evaluate(f1, env), res[rows["F1"]], atol=1e-12)
    np.testing.assert_allclose(ox.evaluate(f2, env), res[rows["F2"]], atol=1e-12)
    b = prob.jacobian_blocks(u)
    for name, expr in (("F1", f1), ("F2", f2)):
        for var in BLOCK_COLS:
            ref = b[(name, var)].toarray()
            got = ox.assemble_blocks([[ox.jacobian(expr, var, env)]])
            got = got.toarray() if sp.issparse(got) else got
            np.testing.assert_allclose(got, ref, atol=1e-12 * max(1.0, np.abs(ref).max()))


def test_config_validation():
    for kw in ({"epsilon": 0}, {"delta": -1}, {"c_infinity": 0}, {"l_r": 0}, {"n_r": 1}):
        with pytest.raises(ValueError):
            ColloidConfig(**kw)


def test_full_fields_pin_far_field():
    prob = small()
    u = REGISTRY["colloid"].verify_states(prob)[0]
    c_full, psi_full = prob.full_fields(u)
    g = prob.grid
    np.testing.assert_array_equal(c_full[g.inf_idx], prob.cfg.c_infinity)
    np.testing.assert_array_equal(psi_full[g.inf_idx], 0.0)
    np.testing.assert_array_equal(c_full[g.finite_idx], prob.split(u)[0])
