"""Tests for the TD value-estimation field and the 1-d autoencoder surface."""

import math

import numpy as np
import pytest

from optbench.reference_landscapes import (
    Autoencoder1D,
    TwoStateTD,
    td_expected_field,
    td_sample_update,
)
from optbench.stochastic import SeedContext


def _sigmoid(z):
    return 1.0 / (1.0 + math.exp(-z))


# ---------------------------------------------------------------------------
# TD field


def test_fixed_point_matches_cramer_solution():
    # (I - 0.2 P) V = R solved by hand for the default chain:
    #   [[0.88, -0.08], [-0.02, 0.82]] V = [0, 1], det = 0.72
    m = TwoStateTD()
    v = m.fixed_point()
    assert v[0] == pytest.approx(0.08 / 0.72, rel=1e-14)
    assert v[1] == pytest.approx(0.88 / 0.72, rel=1e-14)


def test_field_is_zero_exactly_at_the_fixed_point():
    m = TwoStateTD()
    v = m.fixed_point()
    assert np.max(np.abs(td_expected_field(m, v))) < 1e-14
    # and nowhere else: the affine map is invertible
    assert np.max(np.abs(td_expected_field(m, v + 0.01))) > 1e-4


def test_field_is_affine_with_the_expected_matrix():
    m = TwoStateTD()
    b = td_expected_field(m, np.zeros(2))
    assert np.array_equal(b, m.reward_vector)
    jac = np.column_stack(
        [td_expected_field(m, e) - b for e in np.eye(2)]
    )
    want = m.discount * m.matrix - np.eye(2)
    assert np.allclose(jac, want, atol=1e-15)


def test_field_has_a_rotational_part():
    # the asymmetric chain makes the Jacobian non-symmetric, so the field
    # is not the gradient of any scalar potential
    m = TwoStateTD()
    jac = m.discount * m.matrix - np.eye(2)
    asym = jac - jac.T
    assert abs(asym[0, 1]) == pytest.approx(0.2 * (0.4 - 0.1), rel=1e-14)
    # a symmetric chain has none
    sym = TwoStateTD(transitions=((0.7, 0.3), (0.3, 0.7)))
    js = sym.discount * sym.matrix - np.eye(2)
    assert np.allclose(js, js.T)


def test_stationary_distribution_balances_flow():
    m = TwoStateTD()
    rho = m.stationary()
    assert rho == pytest.approx([0.2, 0.8], rel=1e-14)
    assert rho.sum() == pytest.approx(1.0)
    assert rho[0] * 0.4 == pytest.approx(rho[1] * 0.1)  # detailed balance
    assert rho @ m.matrix == pytest.approx(rho)  # left eigenvector


def test_sampled_updates_average_to_the_weighted_field():
    m = TwoStateTD()
    theta = np.array([0.5, -0.3])
    rho = m.stationary()
    want = rho * td_expected_field(m, theta)
    n = 40_000
    total = np.zeros(2)
    for k in range(n):
        ctx = SeedContext(suite_seed=11, test_id=2, repeat_index=0, step_index=k)
        total += td_sample_update(m, theta, ctx)
    got = total / n
    # each component has std < 1; 4 sigma at n = 40000 is < 0.02
    assert got == pytest.approx(want, abs=0.02)


def test_sampled_update_is_deterministic_per_context():
    m = TwoStateTD()
    theta = np.array([0.1, 0.2])
    ctx = SeedContext(suite_seed=11, test_id=2, repeat_index=3, step_index=7)
    a = td_sample_update(m, theta, ctx)
    b = td_sample_update(m, theta, ctx)
    assert np.array_equal(a, b)
    # one state updated at a time
    assert np.sum(a != 0.0) <= 1


def test_sampled_visitation_matches_stationary():
    m = TwoStateTD()
    theta = np.zeros(2)  # delta at theta=0 equals the reward: 0 or 1
    hits = 0
    n = 20_000
    for k in range(n):
        ctx = SeedContext(suite_seed=5, test_id=9, repeat_index=1, step_index=k)
        upd = td_sample_update(m, theta, ctx)
        hits += upd[1] != 0.0
    assert hits / n == pytest.approx(0.8, abs=0.015)


def test_td_validation_and_round_trip():
    with pytest.raises(ValueError, match="2x2"):
        TwoStateTD(transitions=((1.0,),))
    with pytest.raises(ValueError, match="distribution"):
        TwoStateTD(transitions=((0.5, 0.6), (0.1, 0.9)))
    with pytest.raises(ValueError, match="distribution"):
        TwoStateTD(transitions=((-0.1, 1.1), (0.1, 0.9)))
    with pytest.raises(ValueError, match="discount"):
        TwoStateTD(discount=1.0)
    m = TwoStateTD(transitions=((0.3, 0.7), (0.2, 0.8)), rewards=(1.0, -1.0), discount=0.5)
    assert TwoStateTD.from_dict(m.to_dict()) == m
    assert TwoStateTD.from_dict(None) == TwoStateTD()


# ---------------------------------------------------------------------------
# autoencoder


def test_autoencoder_frozen_values():
    ae = Autoencoder1D()
    assert ae.loss(np.zeros(2)) == 1.0  # (1 + 0 * sigmoid(0))^2
    assert ae.gradient(np.zeros(2)) == pytest.approx([0.0, 1.0], abs=1e-15)
    start = np.array([1.0, 1.0])
    assert ae.loss(start) == pytest.approx((1.0 + _sigmoid(1.0)) ** 2, rel=1e-15)


def test_autoencoder_gradient_matches_finite_differences():
    ae = Autoencoder1D(x=1.5)
    rng = np.random.default_rng(2)
    h = 1e-6
    for _ in range(200):
        theta = rng.uniform(-3.0, 3.0, size=2)
        g = ae.gradient(theta)
        for i in range(2):
            e = np.zeros(2)
            e[i] = h
            fd = (ae.loss(theta + e) - ae.loss(theta - e)) / (2.0 * h)
            assert g[i] == pytest.approx(fd, rel=1e-5, abs=1e-8)


def test_autoencoder_valley_of_exact_reconstructions():
    # t2 = -1/sigmoid(t1) zeroes the residual: loss and gradient vanish
    ae = Autoencoder1D()
    for t1 in (-2.0, -0.5, 0.0, 1.0, 3.0):
        theta = np.array([t1, -(1.0 + math.exp(-t1))])
        assert ae.loss(theta) == pytest.approx(0.0, abs=1e-25)
        assert ae.gradient(theta) == pytest.approx([0.0, 0.0], abs=1e-12)


def test_autoencoder_origin_curvature_is_indefinite():
    # the Hessian at the origin is [[0, 1/2], [1/2, 1/2]] with eigenvalues
    # (1 +- sqrt(5))/4: one ascent and one descent direction
    ae = Autoencoder1D()
    h = 1e-5
    hess = np.zeros((2, 2))
    for j in range(2):
        e = np.zeros(2)
        e[j] = h
        hess[:, j] = (ae.gradient(e) - ae.gradient(-e)) / (2.0 * h)
    assert np.allclose(hess, [[0.0, 0.5], [0.5, 0.5]], atol=1e-8)
    lam = np.linalg.eigvalsh(hess)
    root5 = math.sqrt(5.0)
    assert lam[0] == pytest.approx((1.0 - root5) / 4.0, rel=1e-6)
    assert lam[1] == pytest.approx((1.0 + root5) / 4.0, rel=1e-6)


def test_autoencoder_descent_reaches_the_valley():
    ae = Autoencoder1D()
    theta = np.array([1.0, 1.0])
    for _ in range(2000):
        theta = theta - 0.3 * ae.gradient(theta)
    assert ae.loss(theta) < 1e-12


def test_autoencoder_round_trip():
    ae = Autoencoder1D(x=0.7)
    assert Autoencoder1D.from_dict(ae.to_dict()) == ae
    assert Autoencoder1D.from_dict(None) == Autoencoder1D()


def test_sigmoid_is_stable_at_extremes():
    ae = Autoencoder1D()
    big = np.array([800.0, 1.0])
    assert math.isfinite(ae.loss(big))
    assert math.isfinite(ae.loss(-big))
    assert np.all(np.isfinite(ae.gradient(big)))
