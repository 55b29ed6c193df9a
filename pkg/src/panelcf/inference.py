"""Variance estimation and confidence intervals for symmetric estimators.

The same point estimate ``<y_n, alpha> = <y_t, beta>`` admits three
variances depending on what is treated as random:

* HZ: the donors' target outcomes ``y_t`` are random, ``v_hz = beta' S_T beta``;
* VT: the treated history ``y_n`` is random, ``v_vt = alpha' S_N alpha``;
* mixed: both are, ``v_mix = v_hz + v_vt - tr(pinv(y0) S_T pinv(y0.T) S_N)``.

``S_T`` (``N0 x N0``) and ``S_N`` (``T0 x T0``) are diagonal error covariances
estimated from in-sample residuals by one of three rules: homoskedastic,
jackknife or HRK (Hartley, Rao and Kiefer's unbiased estimator).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from .core import Blocks, SpectralCache, hat_matrices, pseudoinverse, rank_k_truncate, svd_decompose
from .errors import DegenerateSide, HrkUndefined, NegativeVariance, UnsupportedMethod
from .estimators import (
    SYMMETRIC,
    FitResult,
    Method,
    Pcr,
    SolverConfig,
    fit_symmetric,
    method_params,
)

HRK_MAX_COND = 1e12
DEGENERATE_RTOL = 1e-12


class CovKind(str, Enum):
    HOMOSKEDASTIC = "homo"
    JACKKNIFE = "jack"
    HRK = "hrk"


@dataclass(frozen=True)
class Residuals:
    """In-sample errors of the two minimum-norm regressions.

    ``eps_t_hat = (I - UU') y_t`` (length ``N0``) and
    ``eps_n_hat = (I - VV') y_n`` (length ``T0``).
    """

    eps_t_hat: np.ndarray
    eps_n_hat: np.ndarray


@dataclass(frozen=True)
class CovEstimate:
    """Diagonals of the estimated error covariances ``S_T`` and ``S_N``."""

    sigma_t_hat: np.ndarray
    sigma_n_hat: np.ndarray
    kind: CovKind
    flags: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Variances:
    v_hz: float
    v_vt: float
    v_mix: float
    trace_term: float


@dataclass(frozen=True)
class IntervalReport:
    """Point, variances and intervals for one treated cell.

    ``v_mix`` is the raw mixed estimate; ``v_mix_used`` is what the mixed
    interval is built from (the sum ``v_hz + v_vt`` when ``v_mix < 0``).
    Intervals are ``None`` when their variance is negative, which can only
    happen with HRK.
    """

    point: float
    point_hz: float
    point_vt: float
    v_hz: float
    v_vt: float
    v_mix: float
    v_mix_used: float
    mix_fallback_used: bool
    trace_term: float
    bounds: dict
    level: float
    z: float
    ci_hz: Optional[tuple]
    ci_vt: Optional[tuple]
    ci_mix: Optional[tuple]
    degeneracy: dict
    cov_kind: str
    method: dict
    rank: int
    flags: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = asdict(self)
        for key in ("ci_hz", "ci_vt", "ci_mix"):
            if out[key] is not None:
                out[key] = list(out[key])
        return out


# ---------------------------------------------------------------------------
# residuals and covariance estimators


def residuals(blocks: Blocks, cache: SpectralCache) -> Residuals:
    """Project ``y_t`` and ``y_n`` off the column and row spaces of ``y0``.

    Pass a rank-``k`` truncated cache to obtain PCR residuals.
    """
    u, v = cache.u, cache.v
    eps_t = blocks.y_t - u @ (u.T @ blocks.y_t)
    eps_n = blocks.y_n - v @ (v.T @ blocks.y_n)
    return Residuals(eps_t, eps_n)


def cov_homoskedastic(res: Residuals, rank: int, on_degenerate: str = "raise") -> CovEstimate:
    """Pooled residual variance on each side.

    ``s2_T = ||eps_t||^2 / (N0 - R)`` and ``s2_N = ||eps_n||^2 / (T0 - R)``.

    Parameters
    ----------
    res : Residuals
    rank : int
        Rank ``R`` of the (possibly truncated) donor matrix.
    on_degenerate : {"raise", "zero"}
        What to do when a side has no residual degrees of freedom. With
        ``"zero"`` the side's variance is set to zero and flagged.

    Raises
    ------
    DegenerateSide
        When ``N0 == R`` or ``T0 == R`` and ``on_degenerate="raise"``.
    """
    flags = {}
    out = []
    for side, eps in (("hz", res.eps_t_hat), ("vt", res.eps_n_hat)):
        dof = eps.size - rank
        if dof <= 0:
            if on_degenerate == "raise":
                raise DegenerateSide(side.upper())
            flags[f"{side}_no_dof"] = True
            out.append(np.zeros(eps.size))
        else:
            out.append(np.full(eps.size, float(eps @ eps) / dof))
    return CovEstimate(out[0], out[1], CovKind.HOMOSKEDASTIC, flags)


def _jackknife_side(eps: np.ndarray, hat: np.ndarray) -> np.ndarray:
    lev = 1.0 - np.diag(hat)
    out = np.zeros_like(eps)
    # 0/0 = 0 when the observation is fit perfectly (leverage one)
    ok = np.abs(lev) > 1e-10
    out[ok] = eps[ok] ** 2 / lev[ok] ** 2
    return out


def cov_jackknife(res: Residuals, h_u: np.ndarray, h_v: np.ndarray) -> CovEstimate:
    """Leverage-corrected squared residuals ``eps_l^2 / (1 - H_ll)^2``."""
    return CovEstimate(
        _jackknife_side(res.eps_t_hat, h_u),
        _jackknife_side(res.eps_n_hat, h_v),
        CovKind.JACKKNIFE,
    )


def _hrk_side(eps: np.ndarray, hat: np.ndarray, side: str) -> tuple[np.ndarray, dict]:
    perp = np.eye(hat.shape[0]) - hat
    system = perp * perp
    sv = np.linalg.svd(system, compute_uv=False)
    # entries are bounded by one, so a tiny smallest singular value is
    # singular in absolute terms even when rounding noise is well conditioned
    cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else float("inf")
    if not np.isfinite(cond) or cond > HRK_MAX_COND or sv[-1] < 1.0 / HRK_MAX_COND:
        raise HrkUndefined(side, cond)
    diag = np.linalg.solve(system, eps * eps)
    flags = {
        f"{side.lower()}_max_leverage": float(np.max(np.diag(hat))),
        f"{side.lower()}_leverage_below_half": bool(np.max(np.diag(hat)) < 0.5),
        f"{side.lower()}_negative_entries": int(np.sum(diag < 0)),
    }
    return diag, flags


def cov_hrk(res: Residuals, h_u: np.ndarray, h_v: np.ndarray) -> CovEstimate:
    """Unbiased diagonal covariance from ``(H_perp o H_perp) s = eps o eps``.

    Entries can be negative; they are kept and counted in ``flags``.

    Raises
    ------
    HrkUndefined
        When either Hadamard-squared projector is numerically singular
        (condition number above ``1e12``). Leverages all below one half is a
        sufficient condition for invertibility and is reported in ``flags``.
    """
    s_t, f_t = _hrk_side(res.eps_t_hat, h_u, "HZ")
    s_n, f_n = _hrk_side(res.eps_n_hat, h_v, "VT")
    return CovEstimate(s_t, s_n, CovKind.HRK, {**f_t, **f_n})


def estimate_cov(kind: CovKind | str, blocks: Blocks, cache: SpectralCache, on_degenerate="zero") -> CovEstimate:
    """Residuals plus the chosen covariance rule, all from ``cache``."""
    kind = CovKind(kind)
    res = residuals(blocks, cache)
    if kind is CovKind.HOMOSKEDASTIC:
        return cov_homoskedastic(res, cache.rank, on_degenerate)
    h_u, h_v = hat_matrices(cache)
    if kind is CovKind.JACKKNIFE:
        return cov_jackknife(res, h_u, h_v)
    return cov_hrk(res, h_u, h_v)


# ---------------------------------------------------------------------------
# variances


def trace_term(cache: SpectralCache, sigma_t: np.ndarray, sigma_n: np.ndarray) -> float:
    """``tr(pinv(y0) diag(sigma_t) pinv(y0.T) diag(sigma_n))`` from the SVD.

    Equals ``sum_{l,m} (V' S_N V)_{lm} (U' S_T U)_{ml} / (s_l s_m)``.
    """
    a = (cache.u.T * sigma_t) @ cache.u
    b = (cache.v.T * sigma_n) @ cache.v
    return float(np.sum(a.T * b / np.outer(cache.s, cache.s)))


def variance_estimates(fit: FitResult, cov: CovEstimate, cache: SpectralCache) -> Variances:
    """HZ, VT and mixed variances of a symmetric fit."""
    if not fit.symmetric:
        raise UnsupportedMethod("variance estimates need both HZ and VT weights")
    v_hz = float(fit.beta_hat @ (cov.sigma_t_hat * fit.beta_hat))
    v_vt = float(fit.alpha_hat @ (cov.sigma_n_hat * fit.alpha_hat))
    tr = trace_term(cache, cov.sigma_t_hat, cov.sigma_n_hat)
    return Variances(v_hz, v_vt, v_hz + v_vt - tr, tr)


def mixed_bounds(fit: FitResult, cov: CovEstimate, cache: SpectralCache) -> dict:
    """Range of the mixed variance implied by the extreme covariance entries.

    Returns
    -------
    dict
        ``v_mix_min`` and ``v_mix_max``; they coincide when both covariance
        diagonals are constant.
    """
    bb = float(fit.beta_hat @ fit.beta_hat)
    aa = float(fit.alpha_hat @ fit.alpha_hat)
    tr = float(np.sum(1.0 / cache.s**2))
    st, sn = cov.sigma_t_hat, cov.sigma_n_hat
    lo_t, hi_t = (float(st.min()), float(st.max())) if st.size else (0.0, 0.0)
    lo_n, hi_n = (float(sn.min()), float(sn.max())) if sn.size else (0.0, 0.0)
    return {
        "v_mix_min": lo_t * bb + lo_n * aa - hi_t * hi_n * tr,
        "v_mix_max": hi_t * bb + hi_n * aa - lo_t * lo_n * tr,
    }


def mixed_fallback(v_hz: float, v_vt: float, v_mix: float) -> tuple[float, bool]:
    """Replace a negative mixed variance by the conservative ``v_hz + v_vt``."""
    if v_mix < 0:
        return v_hz + v_vt, True
    return v_mix, False


def analytic_variances(
    cache: SpectralCache,
    alpha_star: np.ndarray,
    beta_star: np.ndarray,
    sigma_t: np.ndarray,
    sigma_n: np.ndarray,
    y_n: Optional[np.ndarray] = None,
    y_t: Optional[np.ndarray] = None,
) -> dict:
    """Model variances and estimands for known coefficients and error covariances.

    ``v_mix`` and ``mu_mix`` need only the model. ``v_hz``/``mu_hz`` condition
    on an observed ``y_n`` and ``v_vt``/``mu_vt`` on an observed ``y_t``; they
    are omitted when those vectors are not given.
    """
    pinv = pseudoinverse(cache)
    h_u, h_v = hat_matrices(cache)
    hb = h_u @ beta_star
    ha = h_v @ alpha_star
    y0 = cache.reconstruct()
    out = {
        "mu_mix": float(alpha_star @ y0.T @ beta_star),
        "v_mix": float(hb @ (sigma_t * hb) + ha @ (sigma_n * ha) + trace_term(cache, sigma_t, sigma_n)),
    }
    if y_n is not None:
        beta_hat = pinv.T @ y_n
        out["mu_hz"] = float(y_n @ ha)
        out["v_hz"] = float(beta_hat @ (sigma_t * beta_hat))
    if y_t is not None:
        alpha_hat = pinv @ y_t
        out["mu_vt"] = float(y_t @ hb)
        out["v_vt"] = float(alpha_hat @ (sigma_n * alpha_hat))
    return out


# ---------------------------------------------------------------------------
# intervals


_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)


def norm_ppf(p: float) -> float:
    """Inverse standard normal CDF.

    Acklam's rational approximation (relative error about 1e-9) followed by
    one Halley correction against ``math.erfc``, which brings the error to
    the order of machine precision over ``(1e-300, 1 - 1e-16)``.
    """
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    if p > 0.5:
        # 1 - p is exact here; the lower tail avoids cancellation near one
        return -norm_ppf(1.0 - p)
    if p < 0.02425:
        q = math.sqrt(-2.0 * math.log(p))
        x = (((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / (
            (((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0)
    else:
        q = p - 0.5
        r = q * q
        x = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q / (
            ((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0)
    e = 0.5 * math.erfc(-x / math.sqrt(2.0)) - p
    u = e * math.sqrt(2.0 * math.pi) * math.exp(0.5 * x * x)
    return x - u / (1.0 + 0.5 * x * u)


def z_value(theta: float) -> float:
    """Upper ``theta/2`` quantile of the standard normal."""
    if not 0.0 < theta < 1.0:
        raise ValueError("theta must lie in (0, 1)")
    return -norm_ppf(0.5 * theta)


def confidence_interval(point: float, v: float, theta: float = 0.05) -> tuple[float, float]:
    """``point -/+ z_{theta/2} sqrt(v)``."""
    if v < 0 or math.isnan(v):
        raise NegativeVariance(v)
    half = z_value(theta) * math.sqrt(v)
    return point - half, point + half


def _is_degenerate(eps: np.ndarray, data: np.ndarray) -> bool:
    return float(np.linalg.norm(eps)) <= DEGENERATE_RTOL * (1.0 + float(np.linalg.norm(data)))


def analyze_period(
    blocks: Blocks,
    method: Method,
    cov_kind: CovKind | str = CovKind.HOMOSKEDASTIC,
    theta: float = 0.05,
    cfg: Optional[SolverConfig] = None,
    cache: Optional[SpectralCache] = None,
) -> IntervalReport:
    """Fit, estimate variances and build the three intervals for one period.

    For PCR every quantity (residuals, projectors, pseudoinverse, rank) uses
    the rank-``k`` truncation. Ridge uses the untruncated donor matrix for
    residuals and the trace term together with its own shrunken weights.

    A side is flagged degenerate when its residual norm is at most
    ``1e-12 (1 + norm of the data vector)``; its variance is then zero and
    its interval collapses to the point.
    """
    if not isinstance(method, SYMMETRIC):
        raise UnsupportedMethod(f"intervals are available for OLS, PCR and ridge, not {method.name}")
    cache = svd_decompose(blocks.y0) if cache is None else cache
    fit = fit_symmetric(blocks, method, cache)
    eff = rank_k_truncate(cache, method.k) if isinstance(method, Pcr) else cache
    cov = estimate_cov(cov_kind, blocks, eff, on_degenerate="zero")
    res = residuals(blocks, eff)
    degeneracy = {
        "hz_degenerate": _is_degenerate(res.eps_t_hat, blocks.y_t),
        "vt_degenerate": _is_degenerate(res.eps_n_hat, blocks.y_n),
    }
    var = variance_estimates(fit, cov, eff)
    v_mix_used, fallback = mixed_fallback(var.v_hz, var.v_vt, var.v_mix)
    flags = dict(cov.flags)

    def interval(v, name):
        if v < 0:
            flags[f"negative_{name}"] = True
            return None
        return confidence_interval(fit.point_hz, v, theta)

    return IntervalReport(
        point=fit.point_hz,
        point_hz=fit.point_hz,
        point_vt=fit.point_vt,
        v_hz=var.v_hz,
        v_vt=var.v_vt,
        v_mix=var.v_mix,
        v_mix_used=v_mix_used,
        mix_fallback_used=fallback,
        trace_term=var.trace_term,
        bounds=mixed_bounds(fit, cov, eff),
        level=theta,
        z=z_value(theta),
        ci_hz=interval(var.v_hz, "v_hz"),
        ci_vt=interval(var.v_vt, "v_vt"),
        ci_mix=interval(v_mix_used, "v_mix"),
        degeneracy=degeneracy,
        cov_kind=CovKind(cov_kind).value,
        method=method_params(method),
        rank=eff.rank,
        flags=flags,
    )
