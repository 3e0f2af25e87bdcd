import numpy as np
import pytest

from beliefhjb import PairSearchTooLarge, build_grid, make_spec, solve_value, to_u
from beliefhjb.operator import PRINTED, TRANSFORMED
from beliefhjb.solver import Scheme, ValueField
from beliefhjb.verify import (MAX_LISTED, VerifyReport, adversarial_experiment,
                              barrier_identity_check, bounds_check, check_residual_sign,
                              comparison_experiment, complementarity_check, doubling_experiment,
                              doubling_maximize, kink_mask, make_barrier_fields,
                              scheme_monotonicity_check, theta_check)


@pytest.fixture(scope="module")
def u_std(std_spec, std_solution):
    grid, V, _ = std_solution
    return ValueField(grid, to_u(std_spec, V.values), "u")


def test_report_caps_violations():
    rep = VerifyReport("x", False)
    rep.add_violations(range(250))
    assert rep.n_violations == 250
    assert len(rep.to_dict()["violations"]) == MAX_LISTED


def test_residual_sign_on_solution(std_spec, u_std):
    assert check_residual_sign(std_spec, u_std, "SUB").passed
    assert check_residual_sign(std_spec, u_std, "SUPER").passed


def test_residual_sign_bare_tolerance_is_too_tight(std_spec, u_std):
    """Without the truncation allowance, discretisation error alone trips the SUB side."""
    rep = check_residual_sign(std_spec, u_std, "SUB", consistency_allowance=False)
    assert not rep.passed
    assert rep.values["F_max"] < 1e-4


def test_residual_sign_detects_non_solution(std_spec, u_std):
    shifted = ValueField(u_std.grid, u_std.values - 1.0, "u")
    rep = check_residual_sign(std_spec, shifted, "SUPER")
    assert not rep.passed and rep.n_violations > 100


def test_obstacle_is_supersolution_off_kinks(std_spec):
    grid = build_grid(1, 201)
    g = Scheme(std_spec, grid).g
    ug = ValueField(grid, to_u(std_spec, g), "u")
    assert check_residual_sign(std_spec, ug, "SUPER", exclude_kinks=True).passed
    assert kink_mask(std_spec, grid).sum() >= 1


def test_side_validation(std_spec, u_std):
    with pytest.raises(ValueError):
        check_residual_sign(std_spec, u_std, "BOTH")


def test_bounds_and_complementarity(std_spec, std_solution):
    grid, V, _ = std_solution
    assert bounds_check(std_spec, V, 1e-8).passed
    assert complementarity_check(std_spec, V, 1e-8).passed
    bad = ValueField(grid, V.values.copy())
    bad.values[50] = 0.5
    assert not bounds_check(std_spec, bad, 1e-8).passed
    assert not complementarity_check(std_spec, bad, 1e-8).passed
    lifted = ValueField(grid, V.values + 0.01)
    assert not complementarity_check(std_spec, lifted, 1e-8).passed


@pytest.mark.parametrize("d, n, tol", [(1, 201, 1e-8), (2, 51, 1e-6)])
def test_comparison_experiment(std_spec, spec2, d, n, tol):
    spec = std_spec if d == 1 else spec2
    rep = comparison_experiment(spec, build_grid(d, n), tol)
    assert rep.passed, rep.to_dict()
    assert rep.values["order_breaks"] == 0
    assert rep.values["sup_distance"] <= 10 * tol


def test_adversarial(std_spec):
    rep = adversarial_experiment(std_spec, build_grid(1, 41), seeds=(0, 1), tol=1e-9)
    assert rep.passed


def test_barrier_identity(std_spec, spec2):
    for spec in (std_spec, spec2):
        for sign in (PRINTED, TRANSFORMED):
            rep = barrier_identity_check(spec, 20_000, p2_sign=sign)
            assert rep.passed and rep.values["max_rel_err"] < 1e-13


def test_theta(std_spec, spec2):
    assert theta_check(std_spec, 2.0, 20_000).passed
    assert theta_check(spec2, 0.5, 20_000, seed=3).passed


def test_theta_too_large_is_caught(std_spec, monkeypatch):
    import beliefhjb.verify as vmod
    orig = vmod.theta_monotonicity
    monkeypatch.setattr(vmod, "theta_monotonicity", lambda spec, R: 10 * orig(spec, R) + 5)
    assert not theta_check(std_spec, 2.0, 5000).passed


def test_scheme_monotonicity(std_spec, spec2):
    assert scheme_monotonicity_check(std_spec, build_grid(1, 51), 50).passed
    rep = scheme_monotonicity_check(spec2, build_grid(2, 15), 20)
    assert rep.passed and rep.values["max_TU_minus_TW"] <= 0


def test_oversized_step_breaks_monotonicity(std_spec):
    grid = build_grid(1, 51)
    sch = Scheme(std_spec, grid)
    rng = np.random.default_rng(0)
    U = rng.uniform(1, 2, grid.size)
    W = U.copy()
    W[25] += 0.1
    TU, _ = sch.sweep(U, tau=40 * sch.tau)
    TW, _ = sch.sweep(W, tau=40 * sch.tau)
    assert (TU - TW).max() > 0


def test_barrier_fields_shape(u_std):
    ue, ve = make_barrier_fields(u_std, u_std, 0.1)
    assert ue.values.size == u_std.grid.size - 2
    assert (ue.values < ve.values).all()
    with pytest.raises(ValueError):
        make_barrier_fields(u_std, u_std, -1.0)


@pytest.fixture(scope="module")
def doubling_pair(std_spec):
    grid = build_grid(1, 101)
    V, _ = solve_value(std_spec, grid)
    partner = make_spec(0.0, 2.0, 1.0, c=2.0, b=std_spec.b)
    W, _ = solve_value(partner, grid)
    return (ValueField(grid, to_u(std_spec, V.values), "u"),
            ValueField(grid, to_u(std_spec, W.values), "u"))


def test_doubling_bound(doubling_pair):
    u, v = doubling_pair
    rep = doubling_experiment(u, v)
    assert rep.passed, rep.to_dict()
    assert len(rep.values["runs"]) == 12


def test_doubling_brute_force(doubling_pair):
    u, v = doubling_pair
    ue, ve = make_barrier_fields(u, v, 0.01)
    res = doubling_maximize(ue, ve, 10.0, threads=2)
    brute = ue.values[:, None] - ve.values[None, :] \
        - 5.0 * (ue.x[:, 0][:, None] - ve.x[:, 0][None, :]) ** 2
    assert res.value == brute.max()
    assert res.diagonal_ok


def test_doubling_budget(doubling_pair):
    u, v = doubling_pair
    ue, ve = make_barrier_fields(u, v, 0.01)
    with pytest.raises(PairSearchTooLarge):
        doubling_maximize(ue, ve, 1.0, budget=100)


def test_barrier_field_examples():
    grid = build_grid(1, 5)
    zero = ValueField(grid, np.zeros(grid.size), "u")
    ue, ve = make_barrier_fields(zero, zero, 1.0)
    assert ue.values[1] == pytest.approx(-2 * np.log(2))
    u0, _ = make_barrier_fields(zero, zero, 0.0)
    np.testing.assert_array_equal(u0.values, zero.values[1:-1])


def test_barrier_ordering(u_std):
    ue, ve = make_barrier_fields(u_std, u_std, 0.01)
    inner = u_std.values[ue.index]
    assert (ue.values <= inner).all() and (inner <= ve.values).all()


def test_doubling_symmetric_case(u_std):
    """With ``u = v`` separation needs slope to beat the penalty, so it dies out as alpha grows."""
    ue, ve = make_barrier_fields(u_std, u_std, 0.05)
    seps = []
    for alpha in (1.0, 10.0, 100.0, 1000.0):
        res = doubling_maximize(ue, ve, alpha)
        assert res.holds and res.diagonal_ok
        seps.append(res.separation)
    assert seps == sorted(seps, reverse=True) and seps[-1] == 0.0
    flat = ValueField(u_std.grid, np.zeros(u_std.grid.size), "u")
    fe, fv = make_barrier_fields(flat, flat, 0.05)
    for alpha in (1.0, 100.0):
        res = doubling_maximize(fe, fv, alpha)
        assert res.separation == 0.0 and res.x_star[0] == 0.5


def test_theta_sensitivity(std_spec, u_std):
    """Shifting a u-field down by delta lowers its discrete F by at least theta * delta."""
    from beliefhjb.operator import F_values, theta_monotonicity
    from beliefhjb.verify import _central_jets
    grid = u_std.grid
    inner = grid.interior_mask()
    x = grid.coords()[inner]
    p, a = _central_jets(u_std)
    delta = 0.3
    theta = theta_monotonicity(std_spec, float(u_std.values.max()) + delta)
    hi, _ = F_values(std_spec, x, u_std.values[inner], p[inner], a[inner], k=std_spec.k,
                     p2_sign=TRANSFORMED)
    lo, _ = F_values(std_spec, x, u_std.values[inner] - delta, p[inner], a[inner],
                     k=std_spec.k, p2_sign=TRANSFORMED)
    assert (hi - lo >= theta * delta).all()
