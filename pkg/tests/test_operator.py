import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from beliefhjb import DomainError, make_spec
from beliefhjb.model import obstacle_g
from beliefhjb.operator import (PRINTED, TRANSFORMED, F_eps_values, F_values, Jet, eval_F,
                                eval_F_eps, eval_f_eps, eval_Phi, theta_monotonicity)


def test_jet_symmetric_storage():
    j = Jet([0.3, 0.6], 0.0, [1.0, 2.0], [[1.0, 5.0], [2.0, 3.0]])
    np.testing.assert_array_equal(j.A, [[1.0, 2.0], [2.0, 3.0]])
    np.testing.assert_array_equal(j.diag, [1.0, 3.0])


@pytest.mark.parametrize("x", [[0.0], [1.0], [0.5, 1.0]])
def test_jet_rejects_boundary(x):
    with pytest.raises(DomainError):
        Jet(x, 0.0, np.zeros(len(x)), np.eye(len(x)))


def test_eval_F_by_hand(std_spec):
    # x = 0.5: s^2 = 1/16; diffusion branch = -(A + q p^2)/16 - c e^{-r}
    jet = Jet([0.5], 0.0, [2.0], [[-32.0]])
    val, br = eval_F(std_spec, jet)
    assert val == pytest.approx(-(-32.0 - 4.0) / 16 - 1.0)
    assert br == 0
    val_t, _ = eval_F(std_spec, jet, p2_sign=TRANSFORMED)
    assert val_t == pytest.approx(-(-32.0 + 4.0) / 16 - 1.0)
    # obstacle branch: 1 - (b - g) e^{-r} = 1 - 2 = -1 at r = 0
    jet2 = Jet([0.5], 0.0, [0.0], [[0.0]])
    val2, br2 = eval_F(std_spec, jet2)
    assert (val2, br2) == (-1.0, 0)  # tie goes to the lowest index
    jet3 = Jet([0.5], 0.0, [0.0], [[16.0]])
    assert eval_F(std_spec, jet3) == (-1.0, 1)


@settings(max_examples=200, deadline=None)
@given(st.floats(0.02, 0.98), st.floats(-0.5, 0.5), st.floats(0.5, 3.0), st.floats(-2, 2))
def test_transformed_operator_matches_value_equation(x, a1, a2, a0):
    """Substituting ``V = b - e^u`` into the value equation divides it by ``e^u``.

    ``u(x) = a0 + a1 x + a2 x^2`` gives exact derivatives; the value-space
    residual ``max(a V'' - c, g - V)`` times ``e^{-u}`` must equal ``F``.
    """
    spec = make_spec(0.0, 2.0, 1.0, sigma=1.3, c=0.7, b=3.0)
    u = a0 + a1 * x + a2 * x * x
    p = a1 + 2 * a2 * x
    A = 2 * a2
    V = spec.b - np.exp(u)
    Vxx = -np.exp(u) * (A + p * p)
    a = spec.k[0] * (x * (1 - x)) ** 2
    res_V = max(a * Vxx - spec.c[0], obstacle_g(spec, [x]) - V)
    F, _ = F_values(spec, np.array([x]), u, np.array([p]), np.array([A]),
                    k=spec.k, p2_sign=TRANSFORMED)
    assert F == pytest.approx(res_V * np.exp(-u), rel=1e-12, abs=1e-12)


def test_printed_sign_differs_from_transform():
    spec = make_spec(0.0, 2.0, 1.0, b=3.0)
    x, p, A, r = np.array([0.4]), np.array([3.0]), np.array([1.0]), 0.0
    Fp, _ = F_values(spec, x, r, p, A, p2_sign=PRINTED)
    Ft, _ = F_values(spec, x, r, p, A, p2_sign=TRANSFORMED)
    assert Fp != Ft


def test_phi_derivatives():
    x = np.array([0.2, 0.7])
    v, g, h = eval_Phi(x)
    assert v == pytest.approx(-(np.log(0.2) + np.log(0.8) + np.log(0.7) + np.log(0.3)))
    step = 1e-6
    for i in range(2):
        e = np.zeros(2)
        e[i] = step
        vp, gp, _ = eval_Phi(x + e)
        vm, gm, _ = eval_Phi(x - e)
        assert g[i] == pytest.approx((vp - vm) / (2 * step), rel=1e-7)
        assert h[i] == pytest.approx((gp[i] - gm[i]) / (2 * step), rel=1e-7)


def test_phi_boundary():
    with pytest.raises(DomainError) as ei:
        eval_Phi(np.array([0.0]))
    assert ei.value.code == "BARRIER_DOMAIN"


def test_f_eps_printed_form():
    eps, x, p = 0.1, 0.3, 2.0
    expect = -eps * ((1 - x) ** 2 + x**2) + eps**2 * (1 - 2 * x) ** 2 \
        + 2 * eps * x * (1 - x) * (2 * x - 1) * p
    assert eval_f_eps(eps, x, p) == pytest.approx(expect, rel=1e-15)


@pytest.mark.parametrize("p2_sign", [PRINTED, TRANSFORMED])
@settings(max_examples=300, deadline=None)
@given(x=st.floats(1e-4, 1 - 1e-4), p=st.floats(-20, 20), A=st.floats(-100, 100),
       r=st.floats(-3, 3), eps=st.sampled_from([1e-3, -1e-3, 0.1, -0.1, 0.5]))
def test_barrier_identity_scalar(p2_sign, x, p, A, r, eps):
    spec = make_spec(0.0, 2.0, 1.0, b=3.0)
    _, grad, hess = eval_Phi(np.array([x]))
    lhs, _ = eval_F_eps(spec, eps, [x], np.array([p]) - eps * grad,
                        [[A - eps * hess[0]]], r, p2_sign=p2_sign)
    rhs, _ = eval_F(spec, Jet([x], r, [p], [[A]]), p2_sign=p2_sign)
    scale = 1.0 + abs(A) + p * p + abs(eps) * (hess[0] + grad[0] ** 2) + 3 * np.exp(-r)
    assert abs(lhs - rhs) <= 1e-12 * scale


def test_theta_closed_form(std_spec):
    assert theta_monotonicity(std_spec, 0.0) == pytest.approx(1.0)
    assert theta_monotonicity(std_spec, 2.0) == pytest.approx(np.exp(-2.0))
    s = make_spec(0.0, 2.0, 1.0, c=5.0, b=2.5)
    assert theta_monotonicity(s, 0.0) == pytest.approx(0.5)


@settings(max_examples=200, deadline=None)
@given(x=st.floats(0.01, 0.99), p=st.floats(-5, 5), A=st.floats(-50, 50),
       r=st.floats(-3, 2), gap=st.floats(0, 4))
def test_F_strictly_increasing_in_r(x, p, A, r, gap):
    spec = make_spec(0.0, 2.0, 1.0, c=0.5, b=3.0)
    theta = theta_monotonicity(spec, 2.0)
    f1, _ = F_values(spec, np.array([x]), r, np.array([p]), np.array([A]))
    f0, _ = F_values(spec, np.array([x]), r - gap, np.array([p]), np.array([A]))
    assert f1 - f0 >= theta * gap - 1e-12


def test_F_eps_zero_is_F(spec2):
    rng = np.random.default_rng(0)
    x = rng.uniform(0.05, 0.95, (50, 2))
    p = rng.normal(size=(50, 2))
    a = rng.normal(size=(50, 2))
    r = rng.normal(size=50)
    v0, b0 = F_values(spec2, x, r, p, a)
    v1, b1 = F_eps_values(spec2, 0.0, x, p, a, r)
    np.testing.assert_array_equal(v0, v1)
    np.testing.assert_array_equal(b0, b1)


def test_phi_examples():
    v, g, h = eval_Phi(np.array([0.5, 0.5]))
    assert v == pytest.approx(4 * np.log(2))
    np.testing.assert_allclose(g, [0, 0], atol=1e-15)
    np.testing.assert_allclose(h, [8, 8])
    v1, g1, _ = eval_Phi(np.array([0.25]))
    assert v1 == pytest.approx(1.673976, abs=1e-6)
    assert g1[0] == pytest.approx(-8 / 3)
    ray = [eval_Phi(np.array([t]))[0] for t in (0.4, 0.3, 0.1, 1e-3, 1e-9)]
    assert np.all(np.diff(ray) > 0)


def test_f_eps_examples():
    assert eval_f_eps(0.3, 0.5, 17.0) == pytest.approx(-0.15)
    assert eval_f_eps(0.2, 1e-12, 0.0) == pytest.approx(-0.2 + 0.04)
    xs = np.linspace(1e-6, 1 - 1e-6, 1001)
    for eps in (0.01, 0.3):
        for p in (-4.0, 0.0, 2.5):
            both = np.abs(eval_f_eps(eps, xs, p)) + np.abs(eval_f_eps(-eps, xs, p))
            assert both.max() <= 2 * eps * (2 + 2 * abs(p) + eps)


def test_obstacle_branch_zero_at_obstacle(std_spec):
    x = np.array([0.3])
    r = np.log(std_spec.b - obstacle_g(std_spec, x))
    val, br = eval_F(std_spec, Jet(x, r, [0.0], [[0.0]]))
    assert val == pytest.approx(0.0, abs=1e-15) and br == 1


def test_hand_example(std_spec):
    val, br = eval_F(std_spec, Jet([0.5], 0.0, [0.0], [[32.0]]))
    assert (val, br) == (-1.0, 1)


def test_degenerate_ellipticity_and_offdiagonal(spec2):
    rng = np.random.default_rng(5)
    for _ in range(500):
        x = rng.uniform(0.01, 0.99, 2)
        p = rng.normal(size=2)
        A = rng.normal(size=(2, 2)) * 10
        A = A + A.T
        r = rng.normal()
        base, _ = eval_F(spec2, Jet(x, r, p, A))
        up, _ = eval_F(spec2, Jet(x, r, p, A + np.diag(rng.exponential(size=2))))
        assert up <= base
        B = A.copy()
        B[0, 1] = B[1, 0] = rng.normal() * 100
        assert eval_F(spec2, Jet(x, r, p, B))[0] == base


def test_reported_branch_attains_value(spec2):
    rng = np.random.default_rng(6)
    x = rng.uniform(0.01, 0.99, (1000, 2))
    p, a, r = rng.normal(size=(1000, 2)), rng.normal(size=(1000, 2)) * 20, rng.normal(size=1000)
    from beliefhjb.operator import _branches
    val, idx = F_values(spec2, x, r, p, a)
    br = _branches(spec2, x, r, p, a, None, PRINTED)
    np.testing.assert_array_equal(br[np.arange(1000), idx], val)


def test_theta_example():
    s = make_spec(0.0, 2.0, 1.0, c=1.0, b=3.0)
    assert theta_monotonicity(s, 1.0) == pytest.approx(np.exp(-1.0))
    assert theta_monotonicity(s, 5.0) < theta_monotonicity(s, 1.0)
