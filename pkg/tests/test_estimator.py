import math

import numpy as np
import pytest

from glmcmdp.estimator import (
    ColumnSimplex,
    ConversionState,
    NumericFailure,
    OnsState,
    RewardEstState,
    RowBall,
    confidence_radius,
    conversion_confidence,
    conversion_gamma_prime,
    conversion_update,
    load_estimators,
    ons_update,
    project_simplex_columns,
    reward_ci,
    reward_update,
    save_estimators,
    solve_constrained_step,
    transition_ci,
)
from glmcmdp.linkfn import LinkFunction, convexity_params
from oracles import brute_force_row_ball, ons_objective


def _softmax(v):
    e = np.exp(v - v.max())
    return e / e.sum()


def make_ons(kind="logit", S=3, d=3, B_p=1.0, lam=1.0, eta=1.0, **kw):
    link = LinkFunction(kind, S)
    if kind == "logit":
        alpha = convexity_params(link, B_p, 1.0, S).alpha
        constraint = RowBall(B_p)
    else:
        alpha = 1.0
        constraint = ColumnSimplex()
    return OnsState.create(link, d, alpha, constraint, eta=eta, lam=lam, **kw)


# ---------------------------------------------------------------- projections


def test_simplex_projection_matches_sorting_free_bisection():
    rng = np.random.default_rng(1)
    M = rng.normal(size=(6, 40)) * 2
    P = project_simplex_columns(M)
    assert P.min() >= 0
    np.testing.assert_allclose(P.sum(axis=0), 1, atol=1e-12)
    # projection is max(v - tau, 0) with tau found by bisection on sum = 1
    for j in range(M.shape[1]):
        lo, hi = M[:, j].min() - 1, M[:, j].max()
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            lo, hi = (mid, hi) if np.maximum(M[:, j] - mid, 0).sum() > 1 else (lo, mid)
        np.testing.assert_allclose(P[:, j], np.maximum(M[:, j] - lo, 0), atol=1e-10)


def test_simplex_projection_keeps_feasible_points():
    W = np.random.default_rng(2).dirichlet(np.ones(4), size=3).T
    np.testing.assert_allclose(project_simplex_columns(W), W, atol=1e-15)


def test_row_ball_projection():
    c = RowBall(2.0, zero_last_row=True)
    W = np.array([[3.0, 4.0], [0.5, 0.5], [1.0, 1.0]])
    P = c.project(W)
    np.testing.assert_allclose(P[0], [1.2, 1.6])
    np.testing.assert_array_equal(P[1], W[1])
    np.testing.assert_array_equal(P[2], 0)
    assert c.contains(P) and not c.contains(W)


# ---------------------------------------------------------------- ONS update


def test_zero_context_leaves_estimate_unchanged():
    st = make_ons("logit", S=3, d=2, B_p=5)
    st.W_hat = np.array([[0.5, -1.0], [0.2, 0.3], [0.0, 1.0]])
    before = st.W_hat.copy()
    ons_update(st, [0.0, 0.0], 1)
    np.testing.assert_array_equal(st.W_hat, before)
    assert st.t == 1


def test_tabular_running_mean():
    st = make_ons("quadratic", S=2, d=1, lam=0.0, tabular_recovery=True)
    for y in (0, 1, 1):
        ons_update(st, [1.0], y)
    np.testing.assert_allclose(st.W_hat[:, 0], [1 / 3, 2 / 3], atol=1e-15)


def test_literal_z_coefficient_is_half_eta_alpha():
    st = make_ons("quadratic", S=2, d=2)
    x = np.array([0.3, 0.7])
    ons_update(st, x, 0)
    np.testing.assert_allclose(st.Z, np.eye(2) + 0.5 * np.outer(x, x), atol=1e-15)


def test_three_step_logit_trace_matches_brute_force():
    rng = np.random.default_rng(3)
    B_p, eta, lam = 5.0, 1.0, 1.0
    st = make_ons("logit", S=2, d=2, B_p=B_p, lam=lam, eta=eta)
    Z = lam * np.eye(2)
    for _ in range(3):
        x = rng.normal(size=2)
        x /= max(1.0, np.linalg.norm(x))
        y = int(rng.integers(2))
        W0 = st.W_hat.copy()
        g = _softmax(W0 @ x)
        g[y] -= 1
        Z = Z + eta * st.alpha / 2 * np.outer(x, x)
        ons_update(st, x, y)
        expected = brute_force_row_ball(W0, np.outer(g, x), Z, eta, B_p)
        np.testing.assert_allclose(st.W_hat, expected, atol=1e-3)


def test_constrained_step_is_first_order_optimal():
    rng = np.random.default_rng(4)
    for constraint in (ColumnSimplex(), RowBall(0.7)):
        S, d = 4, 3
        A = rng.normal(size=(d, d))
        Z = np.eye(d) + A @ A.T
        if isinstance(constraint, ColumnSimplex):
            W0 = rng.dirichlet(np.ones(S), size=d).T
        else:
            W0 = constraint.project(rng.normal(size=(S, d)))
        G = rng.normal(size=(S, d)) * 3
        W = solve_constrained_step(W0, G, Z, 1.0, constraint)
        assert constraint.contains(W, tol=1e-7)
        grad = (W - W0) @ Z + G
        for _ in range(100):
            if isinstance(constraint, ColumnSimplex):
                V = rng.dirichlet(np.ones(S), size=d).T
            else:
                V = constraint.project(rng.normal(size=(S, d)))
            assert np.sum(grad * (V - W)) >= -1e-6


def test_constrained_step_reports_non_convergence():
    rng = np.random.default_rng(5)
    A = rng.normal(size=(3, 3))
    Z = np.eye(3) * 1e-3 + 100 * A @ A.T
    W0 = rng.dirichlet(np.ones(4), size=3).T
    with pytest.raises(NumericFailure) as info:
        solve_constrained_step(W0, rng.normal(size=(4, 3)) * 10, Z, 1.0, ColumnSimplex(), max_iter=2)
    assert info.value.residual > 0


def test_rejects_bad_observations():
    st = make_ons("logit", S=3, d=2)
    with pytest.raises(ValueError):
        ons_update(st, [np.nan, 0.0], 0)
    with pytest.raises(ValueError):
        ons_update(st, [0.1, 0.0], 3)


def test_estimate_stays_feasible():
    rng = np.random.default_rng(6)
    for kind in ("logit", "quadratic"):
        st = make_ons(kind, S=3, d=3, B_p=0.5)
        for _ in range(300):
            x = rng.dirichlet(np.ones(3))
            ons_update(st, x, int(rng.integers(3)))
            assert st.constraint.contains(st.W_hat, tol=1e-7)


def test_incremental_inverse_and_log_det():
    rng = np.random.default_rng(7)
    st = make_ons("quadratic", S=3, d=4)
    for _ in range(1000):
        x = rng.dirichlet(np.ones(4))
        ons_update(st, x, int(rng.integers(3)))
    assert np.linalg.norm(st.Z_inv @ st.Z - np.eye(4)) < 1e-8
    assert st.log_det_Z == pytest.approx(np.linalg.slogdet(st.Z)[1], abs=1e-8)


def test_z_matches_replayed_sum():
    rng = np.random.default_rng(8)
    st = make_ons("logit", S=3, d=2, B_p=2.0)
    xs = rng.normal(size=(25, 2)) * 0.5
    for x in xs:
        ons_update(st, x, 0)
    expected = np.eye(2) + st.eta * st.alpha / 2 * xs.T @ xs
    np.testing.assert_allclose(st.Z, expected, atol=1e-12)


def test_quadratic_estimate_is_consistent():
    rng = np.random.default_rng(9)
    W_star = rng.dirichlet(np.ones(3), size=3).T
    st = make_ons("quadratic", S=3, d=3)
    for _ in range(5000):
        x = rng.dirichlet(np.ones(3))
        ons_update(st, x, int(rng.choice(3, p=W_star @ x)))
    assert np.linalg.norm(st.W_hat - W_star) < 0.1


# ---------------------------------------------------------------- radii


def test_confidence_radius_single_update():
    st = make_ons("quadratic", S=2, d=1)
    ons_update(st, [1.0], 0)
    gamma = confidence_radius(st, B=1.0, B_pR=1.0, delta=0.1)
    expected = 1 + 8 + 2 * ((4 + 8 / 3) * math.log(40) + 4 * math.log(1.5))
    assert gamma == pytest.approx(expected, rel=1e-12)
    assert gamma == pytest.approx(61.43, abs=0.01)


def test_confidence_radius_without_log_det_growth():
    st = make_ons("quadratic", S=2, d=1)
    ons_update(st, [0.0], 0)
    tau = math.log(2 * math.ceil(2 * math.log(2)) / 0.1)
    assert confidence_radius(st, 1.0, 1.0, 0.1) == pytest.approx(9 + 2 * (4 + 8 / 3) * tau, rel=1e-12)


def test_confidence_radius_needs_data():
    with pytest.raises(ValueError):
        confidence_radius(make_ons(), 1.0, 1.0, 0.1)


def test_confidence_radius_is_nondecreasing():
    rng = np.random.default_rng(10)
    st = make_ons("logit", S=3, d=2)
    prev = -np.inf
    for _ in range(200):
        ons_update(st, rng.normal(size=2) * 0.5, int(rng.integers(3)))
        g = confidence_radius(st, 2.0, 1.0, 0.05)
        assert g >= prev
        prev = g


def test_transition_ci():
    st = make_ons("quadratic", S=4, d=1)
    assert transition_ci(st, 10.0, [0.0], 1.0) == 0.0
    assert transition_ci(st, 1e12, [1.0], 1.0, capped=True) == 2.0
    st.Z = np.array([[2.0]])
    st.Z_inv = np.array([[0.5]])
    assert transition_ci(st, 4.0, [1.0], 1.0, S=4) == pytest.approx(2 * 2 / math.sqrt(2), rel=1e-12)


# ---------------------------------------------------------------- rewards


def test_reward_single_observation():
    st = RewardEstState.create(2, lam=1.0)
    reward_update(st, [1.0, 0.0], 0.5)
    np.testing.assert_allclose(st.theta_hat, [0.25, 0.0], atol=1e-15)


def test_reward_zero_targets():
    rng = np.random.default_rng(11)
    st = RewardEstState.create(3)
    for _ in range(50):
        reward_update(st, rng.normal(size=3), 0.0)
    np.testing.assert_array_equal(st.theta_hat, 0)


def test_reward_matches_batch_ridge():
    rng = np.random.default_rng(12)
    X = rng.normal(size=(60, 4))
    r = rng.uniform(size=60)
    st = RewardEstState.create(4, lam=0.7)
    for x, y in zip(X, r):
        reward_update(st, x, y)
    batch = np.linalg.solve(0.7 * np.eye(4) + X.T @ X, X.T @ r)
    np.testing.assert_allclose(st.theta_hat, batch, atol=1e-9)
    assert np.linalg.norm(st.Zr_inv @ st.Zr - np.eye(4)) < 1e-8


def test_reward_ci():
    st = RewardEstState.create(2, lam=1.0)
    assert reward_ci(st, [0.0, 0.0], 0.1) == 0.0
    zeta = math.sqrt(2) + math.sqrt(-0.5 * math.log(0.1))
    assert reward_ci(st, [1.0, 0.0], 0.1) == pytest.approx(zeta, rel=1e-12)

    st1 = RewardEstState.create(1, lam=1.0)
    st1.Zr = np.array([[math.exp(4)]])
    st1.Zr_inv = np.array([[math.exp(-4)]])
    st1.log_det_Zr = 4.0
    width = reward_ci(st1, [1.0], math.exp(-2))
    assert width == pytest.approx((1 + math.sqrt(2)) * math.exp(-2), rel=1e-12)
    assert reward_ci(st, [100.0, 0.0], 0.1, capped=True, R=1.0) == st.B_r


# ---------------------------------------------------------------- conversion


def test_gamma_prime_value():
    assert conversion_gamma_prime(0.0, 1.0, 0.1) == pytest.approx(1 + 8 * math.log(10 * math.sqrt(1604)), rel=1e-12)
    assert conversion_gamma_prime(0.0, 1.0, 0.1) == pytest.approx(48.94, abs=0.01)


def test_conversion_empty_and_zero_predictions():
    st = ConversionState.create(d=2, S=3, lam=1.0)
    cs = conversion_confidence(st, 0.0, 0.1, 1.0)
    np.testing.assert_array_equal(cs.center, np.zeros((3, 2)))
    assert cs.radius == pytest.approx(conversion_gamma_prime(0.0, 1.0, 0.1) + 3.0)
    for _ in range(5):
        conversion_update(st, [0.3, 0.4], np.zeros((3, 2)))
    assert st.c_sq == 0
    np.testing.assert_array_equal(conversion_confidence(st, 0.0, 0.1, 1.0).center, 0)


def test_conversion_single_outer_product():
    st = ConversionState.create(d=2, S=3)
    w = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
    conversion_update(st, [1.0, 0.0], w)
    np.testing.assert_array_equal(st.XtC, np.outer([1.0, 0.0], w[:, 0]))


def test_conversion_replay_matches_batch():
    rng = np.random.default_rng(13)
    d, S, lam = 3, 4, 0.5
    st = ConversionState.create(d, S, lam)
    X, C = [], []
    for _ in range(20):
        x = rng.normal(size=d)
        w = rng.normal(size=(S, d))
        conversion_update(st, x, w)
        X.append(x)
        C.append(w @ x)
    X, C = np.array(X), np.array(C)
    np.testing.assert_allclose(st.XtC, X.T @ C, atol=1e-10)
    np.testing.assert_allclose(st.Z, lam * np.eye(d) + X.T @ X, atol=1e-10)
    assert st.c_sq == pytest.approx(np.sum(C**2), abs=1e-10)
    center = conversion_confidence(st, 1.0, 0.1, 1.0).center
    np.testing.assert_allclose(center, np.linalg.solve(lam * np.eye(d) + X.T @ X, X.T @ C).T, atol=1e-10)


def test_conversion_negative_radius_is_flagged():
    st = ConversionState.create(d=1, S=2, lam=1.0)
    st.c_sq = 1e6
    cs = conversion_confidence(st, 0.0, 0.1, 1.0)
    assert cs.degenerate and cs.radius == 0.0


# ---------------------------------------------------------------- checkpoints


def test_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(14)
    ons = make_ons("logit", S=3, d=2)
    rew = RewardEstState.create(2)
    for _ in range(10):
        x = rng.normal(size=2) * 0.4
        ons_update(ons, x, int(rng.integers(3)))
        reward_update(rew, x, float(rng.uniform()))
    path = save_estimators(tmp_path / "ck.json", {"0,0": ons}, {"0,0": rew})
    ons2, rew2 = load_estimators(path)
    o = ons2["0,0"]
    np.testing.assert_array_equal(o.W_hat, ons.W_hat)
    np.testing.assert_array_equal(o.Z_inv, ons.Z_inv)
    assert (o.t, o.alpha, o.constraint) == (ons.t, ons.alpha, ons.constraint)
    np.testing.assert_array_equal(rew2["0,0"].theta_hat, rew.theta_hat)
    # continuing from the checkpoint gives the same trajectory
    x = np.array([0.2, -0.1])
    ons_update(ons, x, 1)
    ons_update(o, x, 1)
    np.testing.assert_array_equal(o.W_hat, ons.W_hat)
