import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from instances import SHAPES, random_blocks
from panelcf.core import Blocks, hat_matrices, split_blocks, svd_decompose
from panelcf.errors import KOutOfRange, NonPositiveLambda, NotConverged, UnsupportedMethod, DimensionMismatch
from panelcf.estimators import (
    Direction,
    ElasticNet,
    Lasso,
    OlsMinNorm,
    Pcr,
    Ridge,
    Simplex,
    SolverConfig,
    coordinate_descent,
    doubly_robust_combine,
    fit,
    fit_augmented_intercept_ols,
    fit_elastic_net,
    fit_lasso,
    fit_ols_minnorm,
    fit_pcr,
    fit_ridge,
    fit_simplex,
    fit_with_intercepts,
    hpp_alternating_ridge,
    lasso_homotopy,
    method_params,
    penalized_objective,
    project_simplex,
    select_k,
    simplex_least_squares,
)


# oracles ---------------------------------------------------------------------


def enet_by_enumeration(x, t, lambda1, lambda2):
    """Exact elastic-net minimiser by trying every sign pattern (small p only)."""
    p = x.shape[1]
    g = x.T @ x + lambda2 * np.eye(p)
    c = x.T @ t
    best, best_val = None, np.inf
    for signs in itertools.product((-1, 0, 1), repeat=p):
        s = np.array(signs, dtype=float)
        act = s != 0
        w = np.zeros(p)
        if act.any():
            try:
                w[act] = np.linalg.solve(g[np.ix_(act, act)], c[act] - 0.5 * lambda1 * s[act])
            except np.linalg.LinAlgError:
                continue
            if np.any(w[act] * s[act] <= 0):
                continue
        val = penalized_objective(x, t, w, lambda1, lambda2)
        if val < best_val:
            best, best_val = w, val
    return best, best_val


def simplex_by_enumeration(x, t, lam):
    """Exact simplex-constrained minimiser by trying every support."""
    p = x.shape[1]
    q = 2 * (x.T @ x + lam * np.eye(p))
    c = 2 * x.T @ t
    best, best_val = None, np.inf
    for size in range(1, p + 1):
        for sup in itertools.combinations(range(p), size):
            s = list(sup)
            kkt = np.zeros((size + 1, size + 1))
            kkt[:size, :size] = q[np.ix_(s, s)]
            kkt[:size, size] = 1
            kkt[size, :size] = 1
            rhs = np.append(c[s], 1.0)
            try:
                sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
            except np.linalg.LinAlgError:
                continue
            w = np.zeros(p)
            w[s] = sol[:size]
            if w.min() < -1e-12 or abs(w.sum() - 1) > 1e-9:
                continue
            r = t - x @ w
            val = r @ r + lam * w @ w
            if val < best_val:
                best, best_val = w, val
    return best, best_val


# symmetric class -----------------------------------------------------------------


def test_ols_identity_example():
    e = np.eye(4)
    b = Blocks(y_n=e[1], y0=np.eye(4), y_t=2 * e[1])
    assert fit_ols_minnorm(b).point == pytest.approx(2.0)


def test_ols_zero_donors():
    b = Blocks(np.ones(3), np.zeros((2, 3)), np.ones(2))
    f = fit_ols_minnorm(b)
    assert f.point_hz == 0.0 and f.point_vt == 0.0


def test_ols_spectral_sum(rng):
    b = random_blocks(rng, "square")
    y0 = rng.standard_normal((5, 7))
    b = Blocks(rng.standard_normal(7), y0, rng.standard_normal(5))
    u, s, vt = np.linalg.svd(y0, full_matrices=False)
    expected = sum((b.y_n @ vt[l]) * (u[:, l] @ b.y_t) / s[l] for l in range(5))
    assert fit_ols_minnorm(b).point == pytest.approx(expected, abs=1e-9)


@pytest.mark.parametrize("shape", SHAPES)
def test_ols_matches_lstsq(rng, shape):
    b = random_blocks(rng, shape)
    f = fit_ols_minnorm(b)
    np.testing.assert_allclose(f.alpha_hat, np.linalg.lstsq(b.y0, b.y_t, rcond=1e-10)[0], atol=1e-8)
    np.testing.assert_allclose(f.beta_hat, np.linalg.lstsq(b.y0.T, b.y_n, rcond=1e-10)[0], atol=1e-8)


@pytest.mark.parametrize("shape", SHAPES)
def test_min_norm_residence(rng, shape):
    b = random_blocks(rng, shape)
    cache = svd_decompose(b.y0)
    f = fit_ols_minnorm(b, cache)
    h_u, h_v = hat_matrices(cache)
    assert np.linalg.norm(f.alpha_hat - h_v @ f.alpha_hat) <= 1e-8 * np.linalg.norm(f.alpha_hat)
    assert np.linalg.norm(f.beta_hat - h_u @ f.beta_hat) <= 1e-8 * np.linalg.norm(f.beta_hat)


def test_pcr_hand_example():
    b = Blocks(np.array([1.0, 1.0]), np.diag([2.0, 1.0]), np.array([4.0, 2.0]))
    assert fit_pcr(b, None, 1).point == pytest.approx(2.0)


def test_pcr_full_rank_is_ols(rng):
    b = random_blocks(rng, "tall")
    cache = svd_decompose(b.y0)
    assert fit_pcr(b, cache, cache.rank).point == pytest.approx(fit_ols_minnorm(b, cache).point, abs=1e-12)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_pcr_normal_equations(rng, k):
    b = random_blocks(rng, "square", lo=4)
    u, s, vt = np.linalg.svd(b.y0)
    yk = (u[:, :k] * s[:k]) @ vt[:k]
    alpha = np.linalg.lstsq(yk, b.y_t, rcond=1e-10)[0]
    beta = np.linalg.lstsq(yk.T, b.y_n, rcond=1e-10)[0]
    f = fit_pcr(b, None, k)
    assert f.point_hz == pytest.approx(b.y_n @ alpha, abs=1e-9)
    assert f.point_vt == pytest.approx(b.y_t @ beta, abs=1e-9)


def test_pcr_k_range():
    with pytest.raises(KOutOfRange):
        fit_pcr(Blocks(np.ones(2), np.eye(2), np.ones(2)), None, 3)


def test_ridge_dense_solve(rng):
    y0 = rng.standard_normal((6, 4))
    b = Blocks(rng.standard_normal(4), y0, rng.standard_normal(6))
    f = fit_ridge(b, None, 0.5)
    np.testing.assert_allclose(f.alpha_hat, np.linalg.solve(y0.T @ y0 + 0.5 * np.eye(4), y0.T @ b.y_t), atol=1e-10)


def test_ridge_limits(rng):
    y0 = rng.standard_normal((6, 4))
    b = Blocks(rng.standard_normal(4), y0, rng.standard_normal(6))
    assert fit_ridge(b, None, 1e-12).point == pytest.approx(fit_ols_minnorm(b).point, abs=1e-6)
    big = fit_ridge(b, None, 1e12).point
    assert abs(big) <= 1e-6 * np.linalg.norm(b.y_n) * np.linalg.norm(b.y_t)


@pytest.mark.parametrize("lam", [0.0, -1.0])
def test_ridge_rejects_nonpositive(lam):
    with pytest.raises(NonPositiveLambda):
        fit_ridge(Blocks(np.ones(2), np.eye(2), np.ones(2)), None, lam)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31), st.sampled_from(SHAPES), st.sampled_from([1e-3, 1.0, 1e3]))
def test_symmetric_directions_agree(seed, shape, lam):
    b = random_blocks(np.random.default_rng(seed), shape)
    cache = svd_decompose(b.y0)
    for m in (OlsMinNorm(), Pcr(max(1, cache.rank // 2)), Ridge(lam)):
        f = fit(b, m, cache)
        assert abs(f.point_hz - f.point_vt) <= 1e-8 * (1 + abs(f.point_hz))


def test_select_k(california):
    cache = svd_decompose(split_blocks(california, california.t0).y0)
    assert select_k(cache) == 3
    assert select_k(cache, 1.0) == cache.rank
    assert select_k(svd_decompose(np.zeros((2, 2)))) == 0


# lasso and elastic net ------------------------------------------------------------


def test_lasso_kill_condition(rng):
    b = random_blocks(rng, "square")
    lam = 2 * np.abs(b.y0.T @ b.y_t).max()
    f = fit_lasso(b, "hz", lam)
    np.testing.assert_array_equal(f.alpha_hat, 0.0)
    assert f.beta_hat is None and f.point_vt is None


def test_lasso_orthonormal_closed_form(rng):
    q, _ = np.linalg.qr(rng.standard_normal((6, 3)))
    t = rng.standard_normal(6)
    z = q.T @ t
    b = Blocks(rng.standard_normal(3), q, t)
    lam = 0.8
    expected = np.sign(z) * np.maximum(np.abs(z) - lam / 2, 0)
    np.testing.assert_allclose(fit_lasso(b, "hz", lam).alpha_hat, expected, atol=1e-10)


@pytest.mark.parametrize("direction", ["hz", "vt"])
@pytest.mark.parametrize("lambda1,lambda2", [(0.1, 0.0), (1.0, 0.0), (0.5, 0.5), (2.0, 0.1)])
def test_enet_matches_enumeration(rng, direction, lambda1, lambda2):
    y0 = rng.standard_normal((5, 4))
    b = Blocks(rng.standard_normal(4), y0, rng.standard_normal(5))
    f = fit_elastic_net(b, direction, lambda1, lambda2)
    w = f.alpha_hat if direction == "hz" else f.beta_hat
    x, t = (y0, b.y_t) if direction == "hz" else (y0.T, b.y_n)
    w_ref, val_ref = enet_by_enumeration(x, t, lambda1, lambda2)
    assert penalized_objective(x, t, w, lambda1, lambda2) == pytest.approx(val_ref, rel=1e-10, abs=1e-12)
    np.testing.assert_allclose(w, w_ref, atol=1e-7)


def test_enet_degenerates(rng):
    b = random_blocks(rng, "tall")
    np.testing.assert_allclose(
        fit_elastic_net(b, "hz", 0.0, 0.7).alpha_hat, fit_ridge(b, None, 0.7).alpha_hat, atol=1e-8
    )
    np.testing.assert_allclose(fit_elastic_net(b, "vt", 0.3, 0.0).beta_hat, fit_lasso(b, "vt", 0.3).beta_hat, atol=1e-8)


def test_lasso_rejects_nonpositive():
    b = Blocks(np.ones(2), np.eye(2), np.ones(2))
    with pytest.raises(NonPositiveLambda):
        fit_lasso(b, "hz", 0.0)
    with pytest.raises(NonPositiveLambda):
        fit_elastic_net(b, "hz", -1.0, 1.0)


def test_coordinate_descent_monotone(rng):
    x = rng.standard_normal((10, 6))
    t = rng.standard_normal(10)
    _, hist = coordinate_descent(x, t, 0.3, 0.1, SolverConfig())
    assert np.all(np.diff(hist) <= 1e-12 * max(1.0, hist[0]))


def test_coordinate_descent_not_converged(rng):
    x = rng.standard_normal((10, 6))
    with pytest.raises(NotConverged):
        coordinate_descent(x, rng.standard_normal(10), 0.01, 0.0, SolverConfig(max_iters=1))


def test_homotopy_satisfies_kkt(rng):
    x = rng.standard_normal((12, 20))
    t = rng.standard_normal(12)
    for lam in (0.05, 0.5, 5.0):
        w = lasso_homotopy(x, t, lam)
        corr = x.T @ (t - x @ w)
        act = w != 0
        np.testing.assert_allclose(corr[act], 0.5 * lam * np.sign(w[act]), atol=1e-8)
        assert np.all(np.abs(corr[~act]) <= 0.5 * lam + 1e-8)


def test_lasso_on_collinear_study_panel(california):
    b = split_blocks(california, california.t0)
    for d in ("hz", "vt"):
        f = fit_lasso(b, d, 1.0)
        assert np.isfinite(f.point)


@pytest.mark.parametrize("method", ["lasso", "enet"])
def test_asymmetric_random_instances_differ(rng, method):
    differ = 0
    for _ in range(20):
        b = random_blocks(rng, "square", lo=5, hi=6)
        if method == "lasso":
            hz, vt = fit_lasso(b, "hz", 0.1).point_hz, fit_lasso(b, "vt", 0.1).point_vt
        else:
            hz, vt = fit_elastic_net(b, "hz", 0.1, 0.2).point_hz, fit_elastic_net(b, "vt", 0.1, 0.2).point_vt
        differ += abs(hz - vt) > 1e-6
    assert differ >= 18


# simplex ---------------------------------------------------------------------------


@pytest.mark.parametrize(
    "v",
    [[0.2, 0.3, 0.5], [1.0, 1.0], [-1.0, 2.0, 0.5], [10.0, -10.0, 0.0, 3.0], [0.0]],
)
def test_project_simplex(v):
    w = project_simplex(np.array(v))
    assert w.min() >= 0 and w.sum() == pytest.approx(1.0)
    # projection property: <v - w, u - w> <= 0 for every vertex u
    for j in range(len(v)):
        u = np.eye(len(v))[j]
        assert (np.array(v) - w) @ (u - w) <= 1e-12


def test_simplex_single_column():
    b = Blocks(np.array([3.5]), np.array([[1.0], [2.0]]), np.array([4.0, 5.0]))
    f = fit_simplex(b, "hz")
    np.testing.assert_array_equal(f.alpha_hat, [1.0])
    assert f.point_hz == 3.5


@pytest.mark.parametrize("n", [2, 3, 5])
def test_simplex_asymmetry_witness(n):
    lam = 1e-6
    b = Blocks(np.zeros(n), np.eye(n), np.full(n, 2 * (1 + lam) ** 2 / n))
    assert fit_simplex(b, "hz", lam).point_hz == 0.0
    f = fit_simplex(b, "vt", lam)
    np.testing.assert_allclose(f.beta_hat, 1.0 / n, atol=1e-9)
    assert f.point_vt > 0


@pytest.mark.parametrize("direction", ["hz", "vt"])
@pytest.mark.parametrize("lam", [1e-6, 0.1, 10.0])
def test_simplex_matches_enumeration(rng, direction, lam):
    y0 = rng.standard_normal((6, 5))
    b = Blocks(rng.standard_normal(5), y0, rng.standard_normal(6))
    f = fit_simplex(b, direction, lam)
    w = f.alpha_hat if direction == "hz" else f.beta_hat
    x, t = (y0, b.y_t) if direction == "hz" else (y0.T, b.y_n)
    w_ref, val_ref = simplex_by_enumeration(x, t, lam)
    r = t - x @ w
    assert r @ r + lam * w @ w == pytest.approx(val_ref, rel=1e-8, abs=1e-10)
    np.testing.assert_allclose(w, w_ref, atol=1e-5)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31), st.sampled_from(SHAPES))
def test_simplex_feasible_and_monotone(seed, shape):
    b = random_blocks(np.random.default_rng(seed), shape)
    for d in Direction:
        x, t = (b.y0, b.y_t) if d is Direction.HZ else (b.y0.T, b.y_n)
        w, hist = simplex_least_squares(x, t, 1e-6, SolverConfig(tol=1e-9))
        assert w.min() >= -1e-12
        assert abs(w.sum() - 1) <= 1e-10
        assert np.all(np.diff(hist) <= 0)


def test_simplex_hz_is_last_observation_carried_forward(california):
    b = split_blocks(california, california.t0)
    f = fit_simplex(b, "hz")
    assert int(np.argmax(f.alpha_hat)) == b.t0 - 1


# intercepts and combinations ---------------------------------------------------------


def test_intercepts_constant_panel():
    b = Blocks(np.full(3, 2.0), np.full((4, 3), 9.0), np.full(4, 5.0))
    f = fit_with_intercepts(b, OlsMinNorm())
    assert f.point_hz == pytest.approx(7.0) and f.point_vt == pytest.approx(7.0)
    assert f.intercepts == {"alpha0": 5.0, "alpha1": 2.0}


@pytest.mark.parametrize("method", [OlsMinNorm(), Pcr(1), Ridge(1.0)])
def test_intercepts_keep_symmetry(rng, method):
    b = random_blocks(rng, "tall", lo=3)
    f = fit_with_intercepts(b, method)
    assert f.point_hz == pytest.approx(f.point_vt, abs=1e-9)


def test_intercepts_reject_asymmetric():
    with pytest.raises(UnsupportedMethod):
        fit_with_intercepts(Blocks(np.ones(2), np.eye(2), np.ones(2)), Lasso())


def test_naive_intercept_breaks_symmetry(rng):
    b = random_blocks(rng, "square", lo=4)
    f = fit_augmented_intercept_ols(b)
    assert abs(f.point_hz - f.point_vt) > 1e-6


def test_dr_uniform_weights_is_did(rng):
    b = random_blocks(rng, "tall")
    val = doubly_robust_combine(np.full(b.t0, 1 / b.t0), np.full(b.n0, 1 / b.n0), b)
    assert val == pytest.approx(b.y_t.mean() + b.y_n.mean() - b.y0.mean())


@pytest.mark.parametrize("shape", SHAPES)
def test_dr_collapses_for_ols_and_pcr(rng, shape):
    b = random_blocks(rng, shape)
    for m in (OlsMinNorm(), Pcr(1)):
        f = fit(b, m)
        assert doubly_robust_combine(f.alpha_hat, f.beta_hat, b) == pytest.approx(f.point, abs=1e-9)


def test_dr_dimension_check():
    with pytest.raises(DimensionMismatch):
        doubly_robust_combine(np.ones(3), np.ones(2), Blocks(np.ones(2), np.eye(2), np.ones(2)))


# factorised penalties -------------------------------------------------------------------


@pytest.mark.parametrize("direction", ["hz", "vt"])
def test_hpp_single_factor_is_ridge(rng, direction):
    b = random_blocks(rng, "tall")
    w = hpp_alternating_ridge(b, direction, 1, 0.7)
    f = fit_ridge(b, None, 0.7)
    np.testing.assert_allclose(w, f.alpha_hat if direction == "hz" else f.beta_hat, atol=1e-8)


def test_hpp_two_factors_reach_lasso_objective(rng):
    x = rng.standard_normal((30, 6))
    w_true = np.array([3.0, 0, 0, -2.0, 0, 0])
    t = x @ w_true + 0.05 * rng.standard_normal(30)
    b = Blocks(rng.standard_normal(6), x, t)
    lam = 1.0
    w, hist = hpp_alternating_ridge(b, "hz", 2, lam, SolverConfig(tol=1e-14), return_history=True)
    lasso = fit_lasso(b, "hz", lam).alpha_hat
    assert penalized_objective(x, t, w, lam) == pytest.approx(penalized_objective(x, t, lasso, lam), abs=1e-4)
    assert np.all(np.diff(hist) <= 1e-9 * hist[0])


def test_hpp_zero_target():
    b = Blocks(np.ones(3), np.eye(3), np.zeros(3))
    np.testing.assert_array_equal(hpp_alternating_ridge(b, "hz", 2, 1.0), 0.0)


# dispatch -----------------------------------------------------------------------------


@pytest.mark.parametrize(
    "method",
    [OlsMinNorm(), Pcr(2), Ridge(1.0), Lasso(0.5, Direction.VT), ElasticNet(0.5, 0.5), Simplex(1e-6, Direction.VT)],
)
def test_fit_dispatch_and_params(rng, method):
    b = random_blocks(rng, "square", lo=3)
    f = fit(b, method)
    assert np.isfinite(f.point)
    params = method_params(method)
    assert params["name"] == method.name
    if hasattr(method, "direction"):
        assert params["direction"] == method.direction.value
        assert f.symmetric is False


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(tol=0)
    with pytest.raises(ValueError):
        SolverConfig(max_iters=0)
