"""Point estimators for the untreated potential outcome of the treated cell.

Two regressions are available for every method:

* horizontal (HZ): regress the donors' target-period outcomes ``y_t`` on
  their history ``y0`` and apply the weights ``alpha`` to the treated unit's
  history, ``point = <y_n, alpha>``;
* vertical (VT): regress the treated history ``y_n`` on the donors' histories
  ``y0.T`` and apply the weights ``beta`` to the donors at the target period,
  ``point = <y_t, beta>``.

Minimum-norm OLS, PCR and ridge give identical HZ and VT points and are fit in
both directions at once from the SVD of ``y0``. Lasso, elastic net and
simplex-constrained least squares generally do not, so they take a
``direction`` argument.

Penalised objectives are used exactly as

    ||target - design @ w||^2 + lambda1 * ||w||_1 + lambda2 * ||w||^2

with no factor of one half and no sample-size scaling. Many libraries (for
example scikit-learn) use ``1/(2n)`` on the loss, so their penalty values are
not interchangeable with these.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Union

import numpy as np

from .core import (
    Blocks,
    SpectralCache,
    energy_rank,
    rank_k_truncate,
    svd_decompose,
    twice_center,
)
from .errors import (
    DimensionMismatch,
    NonPositiveLambda,
    NotConverged,
    UnsupportedMethod,
)


class Direction(str, Enum):
    HZ = "hz"
    VT = "vt"


@dataclass(frozen=True)
class OlsMinNorm:
    name = "ols"


@dataclass(frozen=True)
class Pcr:
    k: int
    name = "pcr"


@dataclass(frozen=True)
class Ridge:
    lambda2: float = 1.0
    name = "ridge"


@dataclass(frozen=True)
class Lasso:
    lambda1: float = 1.0
    direction: Direction = Direction.HZ
    name = "lasso"


@dataclass(frozen=True)
class ElasticNet:
    lambda1: float = 1.0
    lambda2: float = 1.0
    direction: Direction = Direction.HZ
    name = "enet"


@dataclass(frozen=True)
class Simplex:
    lam: float = 1e-6
    direction: Direction = Direction.HZ
    name = "simplex"


Method = Union[OlsMinNorm, Pcr, Ridge, Lasso, ElasticNet, Simplex]
SYMMETRIC = (OlsMinNorm, Pcr, Ridge)


def method_params(method: Method) -> dict:
    """Flat description of a method, for reports."""
    out = {"name": method.name}
    for key, val in vars(method).items():
        out[key] = val.value if isinstance(val, Direction) else val
    return out


@dataclass(frozen=True)
class SolverConfig:
    """Iteration controls for the iterative solvers.

    ``seed`` is reserved; all solvers here are deterministic.
    """

    max_iters: int = 100_000
    tol: float = 1e-10
    seed: int = 0

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")


@dataclass(frozen=True)
class FitResult:
    """Weights and point predictions of one fit.

    For asymmetric methods only the requested direction is populated; the
    other weight vector and point are ``None``. ``history`` holds objective
    values per solver sweep (empty for closed-form fits).
    """

    alpha_hat: Optional[np.ndarray]
    beta_hat: Optional[np.ndarray]
    point_hz: Optional[float]
    point_vt: Optional[float]
    method: Method
    intercepts: Optional[dict] = None
    history: tuple = field(default=(), repr=False)

    @property
    def point(self) -> float:
        return self.point_hz if self.point_hz is not None else self.point_vt

    @property
    def symmetric(self) -> bool:
        return self.alpha_hat is not None and self.beta_hat is not None


def _cache_for(blocks: Blocks, cache: Optional[SpectralCache]) -> SpectralCache:
    return svd_decompose(blocks.y0) if cache is None else cache


def _spectral_fit(blocks: Blocks, cache: SpectralCache, gains: np.ndarray, method) -> FitResult:
    # alpha = V diag(g) U^T y_t and beta = U diag(g) V^T y_n share one spectrum
    uy = cache.u.T @ blocks.y_t
    vy = cache.v.T @ blocks.y_n
    alpha = cache.v @ (gains * uy)
    beta = cache.u @ (gains * vy)
    return FitResult(
        alpha_hat=alpha,
        beta_hat=beta,
        point_hz=float(blocks.y_n @ alpha),
        point_vt=float(blocks.y_t @ beta),
        method=method,
    )


def fit_ols_minnorm(blocks: Blocks, cache: Optional[SpectralCache] = None) -> FitResult:
    """Minimum-norm least squares in both directions.

    ``alpha = pinv(y0) @ y_t`` and ``beta = pinv(y0.T) @ y_n``; both give the
    point ``sum_l <y_n, v_l><u_l, y_t> / s_l``. A zero ``y0`` gives zero
    weights.
    """
    cache = _cache_for(blocks, cache)
    return _spectral_fit(blocks, cache, 1.0 / cache.s, OlsMinNorm())


def fit_pcr(blocks: Blocks, cache: Optional[SpectralCache], k: int) -> FitResult:
    """Minimum-norm least squares on the rank-``k`` truncation of ``y0``."""
    cache = _cache_for(blocks, cache)
    trunc = rank_k_truncate(cache, k)
    return _spectral_fit(blocks, trunc, 1.0 / trunc.s, Pcr(k))


def fit_ridge(blocks: Blocks, cache: Optional[SpectralCache], lambda2: float) -> FitResult:
    """Ridge regression in both directions, with spectral gains ``s/(s^2+lambda2)``."""
    if not lambda2 > 0:
        raise NonPositiveLambda(f"lambda2 must be positive, got {lambda2}")
    cache = _cache_for(blocks, cache)
    return _spectral_fit(blocks, cache, cache.s / (cache.s**2 + lambda2), Ridge(lambda2))


def select_k(cache: SpectralCache, threshold: float = 0.999) -> int:
    """Number of leading components that capture ``threshold`` of the squared spectrum."""
    return max(1, energy_rank(cache.s, threshold)) if cache.rank else 0


# ---------------------------------------------------------------------------
# asymmetric estimators


def _design(blocks: Blocks, direction: Direction) -> tuple[np.ndarray, np.ndarray]:
    direction = Direction(direction)
    if direction is Direction.HZ:
        return blocks.y0, blocks.y_t
    return blocks.y0.T, blocks.y_n


def _asym_result(blocks, direction, w, method, history) -> FitResult:
    direction = Direction(direction)
    if direction is Direction.HZ:
        return FitResult(w, None, float(blocks.y_n @ w), None, method, history=tuple(history))
    return FitResult(None, w, None, float(blocks.y_t @ w), method, history=tuple(history))


def penalized_objective(x, target, w, lambda1=0.0, lambda2=0.0) -> float:
    """``||target - x w||^2 + lambda1 ||w||_1 + lambda2 ||w||^2``."""
    r = target - x @ w
    return float(r @ r + lambda1 * np.abs(w).sum() + lambda2 * (w @ w))


def coordinate_descent(
    x: np.ndarray,
    target: np.ndarray,
    lambda1: float,
    lambda2: float,
    cfg: SolverConfig,
    w0: Optional[np.ndarray] = None,
) -> tuple[np.ndarray, list[float]]:
    """Cyclic coordinate descent for the elastic-net objective.

    Each coordinate update is the exact minimiser
    ``soft(z_j, lambda1/2) / (||x_j||^2 + lambda2)`` with
    ``z_j = x_j^T (target - x w) + ||x_j||^2 w_j``. Iteration stops when the
    largest coefficient change over a sweep falls below ``cfg.tol``.

    Returns
    -------
    w : ndarray
    history : list of float
        Objective after each sweep.
    """
    x = np.asarray(x, dtype=float)
    p = x.shape[1]
    gram = x.T @ x
    xty = x.T @ target
    diag = np.diag(gram).copy()
    denom = diag + lambda2
    half = 0.5 * lambda1
    w = np.zeros(p) if w0 is None else np.array(w0, dtype=float)
    gw = gram @ w  # kept current
    history: list[float] = []
    for _ in range(cfg.max_iters):
        max_change = 0.0
        for j in range(p):
            if denom[j] == 0.0:
                continue
            z = xty[j] - gw[j] + diag[j] * w[j]
            new = math.copysign(max(abs(z) - half, 0.0), z) / denom[j]
            delta = new - w[j]
            if delta != 0.0:
                gw += delta * gram[:, j]
                w[j] = new
                max_change = max(max_change, abs(delta))
        history.append(penalized_objective(x, target, w, lambda1, lambda2))
        if max_change < cfg.tol:
            return w, history
    raise NotConverged(cfg.max_iters, "coordinate descent")


def lasso_homotopy(
    x: np.ndarray,
    target: np.ndarray,
    lambda1: float,
    lambda2: float = 0.0,
    max_steps: int = 10_000,
) -> np.ndarray:
    """Exact elastic-net solution by following the lasso path down to ``lambda1``.

    The ridge term is absorbed by stacking ``sqrt(lambda2) I`` under ``x``.
    Along the path the active coefficients solve
    ``G_AA w_A = x_A^T target - gamma s_A`` with ``gamma`` the common absolute
    correlation, which shrinks from ``max |x^T target|`` to ``lambda1 / 2``;
    at each breakpoint a variable joins (its correlation reaches ``gamma``)
    or leaves (its coefficient reaches zero).

    Raises
    ------
    numpy.linalg.LinAlgError
        If an active Gram block becomes singular, which happens only once the
        residual is already (numerically) zero.
    """
    x = np.asarray(x, dtype=float)
    target = np.asarray(target, dtype=float)
    p = x.shape[1]
    if lambda2 > 0:
        x = np.vstack([x, math.sqrt(lambda2) * np.eye(p)])
        target = np.concatenate([target, np.zeros(p)])
    gram = x.T @ x
    xty = x.T @ target
    stop = 0.5 * lambda1
    w = np.zeros(p)
    gamma = float(np.max(np.abs(xty))) if p else 0.0
    if gamma <= stop:
        return w
    first = int(np.argmax(np.abs(xty)))
    signs = {first: float(np.sign(xty[first]))}
    last_drop = -1
    for _ in range(max_steps):
        act = np.array(list(signs))
        s_act = np.array(list(signs.values()))
        g_act = gram[np.ix_(act, act)]
        w_act = np.linalg.solve(g_act, xty[act] - gamma * s_act)
        d_act = np.linalg.solve(g_act, s_act)
        w[:] = 0.0
        w[act] = w_act
        corr = xty - gram @ w
        slope = gram[:, act] @ d_act
        step, event = gamma - stop, None
        for j in range(p):
            if j in signs:
                continue
            for num, den, sg in ((gamma - corr[j], 1.0 - slope[j], 1.0), (gamma + corr[j], 1.0 + slope[j], -1.0)):
                if den > 1e-12:
                    d = max(num / den, 0.0)
                    # a variable that just left may not re-enter at the same gamma
                    if j == last_drop and d <= 1e-12 * gamma:
                        continue
                    if d < step:
                        step, event = d, (j, sg)
        for idx, j in enumerate(act):
            # only a coefficient moving against its sign can hit zero
            if s_act[idx] * d_act[idx] < 0:
                d = max(-w_act[idx] / d_act[idx], 0.0)
                if d < step:
                    step, event = d, (int(j), 0.0)
        gamma -= step
        if event is None:
            w[:] = 0.0
            w[act] = np.linalg.solve(g_act, xty[act] - gamma * s_act)
            return w
        j, sg = event
        if sg:
            signs[j] = sg
            last_drop = -1
        else:
            del signs[j]
            last_drop = j
    raise NotConverged(max_steps, "lasso homotopy")


def _warm_start(x, target, lambda1, lambda2):
    try:
        w = lasso_homotopy(x, target, lambda1, lambda2)
    except (np.linalg.LinAlgError, NotConverged):
        return None
    # discard path solutions that miss the optimality conditions
    corr = x.T @ (target - x @ w) - lambda2 * w
    scale = max(1.0, float(np.max(np.abs(x.T @ target))))
    if np.max(np.abs(corr)) > 0.5 * lambda1 + 1e-8 * scale:
        return None
    return w


def fit_lasso(
    blocks: Blocks,
    direction: Direction,
    lambda1: float,
    cfg: Optional[SolverConfig] = None,
) -> FitResult:
    """Lasso weights for one direction by cyclic coordinate descent.

    Coordinate descent is warm-started from the exact path solution of
    :func:`lasso_homotopy`; on the strongly collinear designs typical of
    panels it would otherwise need millions of sweeps. The sweeps then
    certify the point through the coefficient-change criterion. The fixed cyclic order makes the result deterministic; with ties or
    collinear designs the lasso solution need not be unique and this returns
    the coordinate-descent fixed point.
    """
    if not lambda1 > 0:
        raise NonPositiveLambda(f"lambda1 must be positive, got {lambda1}")
    x, target = _design(blocks, direction)
    w0 = _warm_start(x, target, lambda1, 0.0)
    w, hist = coordinate_descent(x, target, lambda1, 0.0, cfg or SolverConfig(), w0)
    return _asym_result(blocks, direction, w, Lasso(lambda1, Direction(direction)), hist)


def fit_elastic_net(
    blocks: Blocks,
    direction: Direction,
    lambda1: float,
    lambda2: float,
    cfg: Optional[SolverConfig] = None,
) -> FitResult:
    """Elastic-net weights for one direction by cyclic coordinate descent.

    ``lambda1 = 0`` reduces to ridge and ``lambda2 = 0`` to lasso; both
    penalties must be nonnegative.
    """
    if lambda1 < 0 or lambda2 < 0:
        raise NonPositiveLambda("elastic-net penalties must be nonnegative")
    x, target = _design(blocks, direction)
    w0 = _warm_start(x, target, lambda1, lambda2)
    w, hist = coordinate_descent(x, target, lambda1, lambda2, cfg or SolverConfig(), w0)
    method = ElasticNet(lambda1, lambda2, Direction(direction))
    return _asym_result(blocks, direction, w, method, hist)


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto ``{w >= 0, sum(w) = 1}`` by sorting."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / idx > 0)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


class _SimplexQP:
    """``f(w) = ||t - X w||^2 + lam ||w||^2`` with cached Gram quantities."""

    def __init__(self, x, target, lam):
        self.x = x
        self.t = target
        self.lam = lam
        self.gram = x.T @ x
        self.xty = x.T @ target
        self.scale = max(1.0, float(target @ target), float(np.sum(x * x)))

    def value(self, w):
        r = self.t - self.x @ w
        return float(r @ r + self.lam * (w @ w))

    def grad(self, w):
        return 2.0 * (self.gram @ w - self.xty + self.lam * w)

    def gap(self, w):
        # Frank-Wolfe gap <g, w - e_j*>; an upper bound on f(w) - min f
        g = self.grad(w)
        return float(g @ w - g.min()) / self.scale

    def polish(self, w, thresh):
        """Exact minimiser on the face spanned by the support of ``w``."""
        s = np.nonzero(w > thresh)[0]
        m = s.size
        kkt = np.zeros((m + 1, m + 1))
        kkt[:m, :m] = 2.0 * (self.gram[np.ix_(s, s)] + self.lam * np.eye(m))
        kkt[:m, m] = 1.0
        kkt[m, :m] = 1.0
        rhs = np.concatenate([2.0 * self.xty[s], [1.0]])
        try:
            sol = np.linalg.solve(kkt, rhs)
        except np.linalg.LinAlgError:
            return None
        ws = sol[:m]
        if np.any(ws < 0):
            return None
        out = np.zeros_like(w)
        out[s] = ws
        return out


def simplex_least_squares(
    x: np.ndarray,
    target: np.ndarray,
    lam: float,
    cfg: SolverConfig,
    polish_every: int = 20,
) -> tuple[np.ndarray, list[float]]:
    """Minimise ``||target - x w||^2 + lam ||w||^2`` over the probability simplex.

    Monotone accelerated projected gradient (the FISTA variant that only
    accepts non-increasing objective values) with exact simplex projection.
    Every ``polish_every`` iterations the equality-constrained problem on the
    current support is solved directly; the result is accepted when it is
    feasible and does not increase the objective. Convergence is declared
    when the Frank-Wolfe gap, scaled by ``max(1, ||target||^2, ||x||_F^2)``,
    falls below ``cfg.tol``.
    """
    x = np.asarray(x, dtype=float)
    p = x.shape[1]
    qp = _SimplexQP(x, np.asarray(target, dtype=float), lam)
    lip = 2.0 * (np.linalg.norm(x, 2) ** 2 + lam)
    if lip == 0.0:
        lip = 1.0
    w = np.full(p, 1.0 / p)
    f = qp.value(w)
    history = [f]
    if qp.gap(w) < cfg.tol:
        return w, history
    y = w.copy()
    tk = 1.0
    for it in range(1, cfg.max_iters + 1):
        z = project_simplex(y - qp.grad(y) / lip)
        fz = qp.value(z)
        w_prev = w
        if fz <= f:
            w, f = z, fz
        t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * tk * tk))
        y = w + (tk / t_next) * (z - w) + ((tk - 1.0) / t_next) * (w - w_prev)
        tk = t_next
        if it % polish_every == 0:
            cand = qp.polish(w, 1e-12)
            if cand is not None:
                fc = qp.value(cand)
                if fc <= f:
                    w, f = cand, fc
                    y = w.copy()
                    tk = 1.0
        history.append(f)
        if qp.gap(w) < cfg.tol:
            return w, history
    raise NotConverged(cfg.max_iters, "simplex solver")


def fit_simplex(
    blocks: Blocks,
    direction: Direction,
    lam: float = 1e-6,
    cfg: Optional[SolverConfig] = None,
) -> FitResult:
    """Simplex-constrained (synthetic-control style) weights for one direction.

    ``lam`` is a small ridge term that makes the solution unique.
    """
    if lam < 0:
        raise NonPositiveLambda(f"lambda must be nonnegative, got {lam}")
    cfg = cfg or SolverConfig(tol=1e-9)
    x, target = _design(blocks, direction)
    w, hist = simplex_least_squares(x, target, lam, cfg)
    return _asym_result(blocks, direction, w, Simplex(lam, Direction(direction)), hist)


# ---------------------------------------------------------------------------
# intercepts and combinations


def fit_with_intercepts(
    blocks: Blocks,
    method: Method,
    cfg: Optional[SolverConfig] = None,
) -> FitResult:
    """Symmetric fit on twice-centered ``y0`` plus time and unit intercepts.

    The base weights come from the centered donor matrix with the raw
    ``y_t`` and ``y_n``; the point adds ``mean(y_t)`` (time intercept) and
    ``mean(y_n)`` (unit intercept) to the base prediction. HZ and VT agree.
    """
    if not isinstance(method, SYMMETRIC):
        raise UnsupportedMethod(f"intercept fits need OLS, PCR or ridge, got {method.name}")
    cb = twice_center(blocks)
    centered = Blocks(blocks.y_n, cb.y0_centered, blocks.y_t, blocks.period_index)
    base = fit_symmetric(centered, method)
    shift = cb.time_intercept + cb.unit_intercept
    return FitResult(
        alpha_hat=base.alpha_hat,
        beta_hat=base.beta_hat,
        point_hz=base.point_hz + shift,
        point_vt=base.point_vt + shift,
        method=method,
        intercepts={"alpha0": cb.time_intercept, "alpha1": cb.unit_intercept},
    )


def fit_augmented_intercept_ols(blocks: Blocks) -> FitResult:
    """Minimum-norm OLS with a constant column appended to each design.

    HZ regresses ``y_t`` on ``[1, y0]``; VT regresses ``y_n`` on
    ``[1, y0.T]``. Without centering the two designs are not transposes of
    each other, so the points generally differ. The returned weights exclude
    the constant; ``intercepts`` holds the fitted constants.
    """
    ones_n = np.ones((blocks.n0, 1))
    ones_t = np.ones((blocks.t0, 1))
    a = np.linalg.pinv(np.hstack([ones_n, blocks.y0])) @ blocks.y_t
    b = np.linalg.pinv(np.hstack([ones_t, blocks.y0.T])) @ blocks.y_n
    return FitResult(
        alpha_hat=a[1:],
        beta_hat=b[1:],
        point_hz=float(a[0] + blocks.y_n @ a[1:]),
        point_vt=float(b[0] + blocks.y_t @ b[1:]),
        method=OlsMinNorm(),
        intercepts={"hz": float(a[0]), "vt": float(b[0])},
    )


def doubly_robust_combine(alpha_hat: np.ndarray, beta_hat: np.ndarray, blocks: Blocks) -> float:
    """``<y_t, beta> + <y_n, alpha> - <beta, y0 alpha>``.

    Uniform weights give the difference-in-differences prediction; the
    minimum-norm OLS or PCR weights give back the common HZ/VT point.
    """
    alpha_hat = np.asarray(alpha_hat, dtype=float)
    beta_hat = np.asarray(beta_hat, dtype=float)
    if alpha_hat.shape != (blocks.t0,) or beta_hat.shape != (blocks.n0,):
        raise DimensionMismatch(
            f"weights of shape {alpha_hat.shape}, {beta_hat.shape} do not match "
            f"blocks ({blocks.n0}, {blocks.t0})"
        )
    return float(blocks.y_t @ beta_hat + blocks.y_n @ alpha_hat - beta_hat @ blocks.y0 @ alpha_hat)


def hpp_objective(x, target, factors, lam) -> float:
    """Factorised objective ``||t - X (w_1 o ... o w_K)||^2 + (lam/K) sum ||w_k||^2``."""
    w = np.prod(factors, axis=0)
    r = target - x @ w
    k = len(factors)
    return float(r @ r + (lam / k) * sum(f @ f for f in factors))


def hpp_alternating_ridge(
    blocks: Blocks,
    direction: Direction,
    K: int,
    lam: float,
    cfg: Optional[SolverConfig] = None,
    return_history: bool = False,
):
    """Weights under the penalty ``lam * sum |w_j|^(2/K)`` via alternating ridge.

    The weight vector is written as a Hadamard product of ``K`` factors and
    each factor is updated in turn by the ridge solve

        w_k = (D X^T X D + (lam/K) I)^{-1} D X^T target,  D = diag(prod of other factors),

    starting from all-ones factors. ``K = 1`` is ridge with ``lambda2 = lam``
    and ``K = 2`` targets the lasso with ``lambda1 = lam``; ``K > 2`` is
    nonconvex and only a stationary point is found. Stops when the relative
    change of the factorised objective drops below ``cfg.tol``.
    """
    if K < 1:
        raise ValueError("K must be at least 1")
    if not lam > 0:
        raise NonPositiveLambda(f"lambda must be positive, got {lam}")
    cfg = cfg or SolverConfig()
    x, target = _design(blocks, direction)
    p = x.shape[1]
    gram = x.T @ x
    xty = x.T @ target
    factors = np.ones((K, p))
    eye = (lam / K) * np.eye(p)
    obj = hpp_objective(x, target, factors, lam)
    history = [obj]
    for _ in range(cfg.max_iters):
        for k in range(K):
            d = np.prod(np.delete(factors, k, axis=0), axis=0)
            factors[k] = np.linalg.solve(gram * np.outer(d, d) + eye, d * xty)
        new = hpp_objective(x, target, factors, lam)
        history.append(new)
        done = abs(obj - new) <= cfg.tol * max(abs(obj), np.finfo(float).tiny)
        obj = new
        if done:
            w = np.prod(factors, axis=0)
            return (w, history) if return_history else w
    raise NotConverged(cfg.max_iters, "alternating ridge")


# ---------------------------------------------------------------------------
# dispatch


def fit_symmetric(blocks: Blocks, method: Method, cache: Optional[SpectralCache] = None) -> FitResult:
    """Fit OLS, PCR or ridge."""
    if isinstance(method, OlsMinNorm):
        return fit_ols_minnorm(blocks, cache)
    if isinstance(method, Pcr):
        return fit_pcr(blocks, cache, method.k)
    if isinstance(method, Ridge):
        return fit_ridge(blocks, cache, method.lambda2)
    raise UnsupportedMethod(f"{method.name} is not a symmetric estimator")


def fit(
    blocks: Blocks,
    method: Method,
    cache: Optional[SpectralCache] = None,
    cfg: Optional[SolverConfig] = None,
) -> FitResult:
    """Fit any supported method."""
    if isinstance(method, SYMMETRIC):
        return fit_symmetric(blocks, method, cache)
    if isinstance(method, Lasso):
        return fit_lasso(blocks, method.direction, method.lambda1, cfg)
    if isinstance(method, ElasticNet):
        return fit_elastic_net(blocks, method.direction, method.lambda1, method.lambda2, cfg)
    if isinstance(method, Simplex):
        return fit_simplex(blocks, method.direction, method.lam, cfg)
    raise UnsupportedMethod(f"unknown method {method!r}")
