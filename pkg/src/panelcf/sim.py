"""Data-calibrated Monte Carlo harness for interval coverage.

A study panel is turned into a Gaussian data-generating process around a
low-rank version of its donor block, then homoskedastic HZ, VT and mixed
intervals are scored against three estimands over many replications.

Calibration (first post-treatment period of the panel):

* ``alpha*``, ``beta*``: minimum-norm fits on the observed blocks;
* ``r``: smallest rank carrying ``energy_threshold`` of the squared spectrum;
* ``y0_r``: rank-``r`` truncation of the donor block;
* ``sigma2_t``, ``sigma2_n``: residual variances of the two fits with
  ``N0 - r`` and ``T0 - r`` degrees of freedom.

Each replication draws ``y_t ~ N(y0_r alpha*, sigma2_t I)`` and
``y_n ~ N(y0_r' beta*, sigma2_n I)`` independently and estimates with
``y0_r`` as the donor matrix.

Random streams are keyed by ``(replication seed, stream id)`` through
:class:`numpy.random.SeedSequence`, so results do not depend on how
replications are scheduled across workers.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, TextIO

import numpy as np

from .core import Blocks, PanelData, SpectralCache, energy_rank, hat_matrices, pseudoinverse, rank_k_truncate, split_blocks, svd_decompose
from .errors import ConfigError, DegenerateDgp
from .estimators import OlsMinNorm
from .inference import CovKind, analyze_period

INTERVALS = ("hz", "vt", "mix")
ESTIMANDS = ("mu_hz", "mu_vt", "mu_mix")
STREAM_Y_T = 0
STREAM_Y_N = 1
COVER_RTOL = 1e-10


@dataclass(frozen=True)
class DgpSpec:
    """Calibrated Gaussian model around a rank-``r`` donor matrix."""

    y0_r: np.ndarray
    alpha_star: np.ndarray
    beta_star: np.ndarray
    sigma2_t: float
    sigma2_n: float
    r: int
    cache: SpectralCache
    mu_hz_coeff: np.ndarray
    mu_vt_coeff: np.ndarray
    mu_mix: float
    meta: dict = field(default_factory=dict)

    @property
    def shape(self) -> tuple[int, int]:
        return self.y0_r.shape

    def summary(self) -> dict:
        return {
            "N0": self.shape[0],
            "T0": self.shape[1],
            "r": self.r,
            "sigma2_t": self.sigma2_t,
            "sigma2_n": self.sigma2_n,
            "mu_mix": self.mu_mix,
            **self.meta,
        }


def dgp_from_parts(
    y0: np.ndarray,
    alpha_star: np.ndarray,
    beta_star: np.ndarray,
    sigma2_t: float,
    sigma2_n: float,
    r: Optional[int] = None,
    meta: Optional[dict] = None,
) -> DgpSpec:
    """Assemble a :class:`DgpSpec` from explicit ingredients.

    ``y0`` is truncated to rank ``r`` (its numerical rank when omitted).
    """
    if sigma2_t < 0 or sigma2_n < 0:
        raise ConfigError("noise variances must be nonnegative")
    full = svd_decompose(y0)
    r = full.rank if r is None else r
    cache = rank_k_truncate(full, r)
    y0_r = cache.reconstruct()
    h_u, h_v = hat_matrices(cache)
    alpha_star = np.asarray(alpha_star, dtype=float)
    beta_star = np.asarray(beta_star, dtype=float)
    return DgpSpec(
        y0_r=y0_r,
        alpha_star=alpha_star,
        beta_star=beta_star,
        sigma2_t=float(sigma2_t),
        sigma2_n=float(sigma2_n),
        r=r,
        cache=cache,
        mu_hz_coeff=h_v @ alpha_star,
        mu_vt_coeff=h_u @ beta_star,
        mu_mix=float(alpha_star @ y0_r.T @ beta_star),
        meta=dict(meta or {}),
    )


def build_dgp(panel: PanelData, energy_threshold: float = 0.999, residual_basis: str = "truncated") -> DgpSpec:
    """Calibrate the simulation model to a panel's first post-treatment period.

    Parameters
    ----------
    panel : PanelData
    energy_threshold : float
        Fraction of squared singular-value mass the truncation must keep.
    residual_basis : {"truncated", "observed"}
        Donor matrix the calibration residuals are taken against. With
        ``"truncated"`` the noise variances are
        ``||y_t - y0_r alpha*||^2 / (N0 - r)`` and
        ``||y_n - y0_r' beta*||^2 / (T0 - r)``; with ``"observed"`` the
        untruncated ``y0`` replaces ``y0_r``, which gives exactly zero on any
        side where the observed fit interpolates.

    Raises
    ------
    DegenerateDgp
        When ``r >= N0`` or ``r >= T0``.
    """
    if residual_basis not in ("truncated", "observed"):
        raise ConfigError(f"unknown residual basis {residual_basis!r}")
    blocks = split_blocks(panel, panel.t0)
    full = svd_decompose(blocks.y0)
    pinv = pseudoinverse(full)
    alpha_star = pinv @ blocks.y_t
    beta_star = pinv.T @ blocks.y_n
    r = energy_rank(full.s, energy_threshold)
    n0, t0 = blocks.y0.shape
    if r >= n0 or r >= t0:
        raise DegenerateDgp(f"rank {r} leaves no residual degrees of freedom for a {n0}x{t0} donor block")
    cache = rank_k_truncate(full, r)
    basis = cache.reconstruct() if residual_basis == "truncated" else blocks.y0
    e_t = blocks.y_t - basis @ alpha_star
    e_n = blocks.y_n - basis.T @ beta_star
    meta = {"energy_threshold": energy_threshold, "residual_basis": residual_basis, "period": panel.time_labels[panel.t0]}
    return dgp_from_parts(
        blocks.y0, alpha_star, beta_star, float(e_t @ e_t) / (n0 - r), float(e_n @ e_n) / (t0 - r), r, meta
    )


# ---------------------------------------------------------------------------
# replications


def stream(seed: int, stream_id: int) -> np.random.Generator:
    """Independent generator for one replication seed and stream id."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, stream_id])))


def draw(dgp: DgpSpec, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """One ``(y_t, y_n)`` draw."""
    n0, t0 = dgp.shape
    y_t = dgp.y0_r @ dgp.alpha_star + np.sqrt(dgp.sigma2_t) * stream(seed, STREAM_Y_T).standard_normal(n0)
    y_n = dgp.y0_r.T @ dgp.beta_star + np.sqrt(dgp.sigma2_n) * stream(seed, STREAM_Y_N).standard_normal(t0)
    return y_t, y_n


@dataclass(frozen=True)
class Replication:
    seed: int
    point: float
    estimands: dict
    variances: dict
    hits: np.ndarray  # interval x estimand
    lengths: np.ndarray  # normalized length per interval


def _covers(lo: float, hi: float, mu: float) -> bool:
    slack = COVER_RTOL * (1.0 + abs(mu))
    return lo - slack <= mu <= hi + slack


def run_replication(dgp: DgpSpec, seed: int, cov_kind: CovKind | str = CovKind.HOMOSKEDASTIC, theta: float = 0.05) -> Replication:
    """Draw once, estimate with ``y0_r`` and score the three intervals.

    Coverage of a degenerate (zero-width) interval allows a relative slack of
    ``1e-10`` so that rounding in the point estimate does not count as a miss.
    A negative HRK variance counts as a miss with infinite length.
    """
    y_t, y_n = draw(dgp, seed)
    blocks = Blocks(y_n=y_n, y0=dgp.y0_r, y_t=y_t)
    rep = analyze_period(blocks, OlsMinNorm(), cov_kind, theta, cache=dgp.cache)
    mus = {
        "mu_hz": float(y_n @ dgp.mu_hz_coeff),
        "mu_vt": float(y_t @ dgp.mu_vt_coeff),
        "mu_mix": dgp.mu_mix,
    }
    hits = np.zeros((3, 3), dtype=bool)
    lengths = np.zeros(3)
    for i, ci in enumerate((rep.ci_hz, rep.ci_vt, rep.ci_mix)):
        if ci is None:
            lengths[i] = np.inf
            continue
        lengths[i] = (ci[1] - ci[0]) / abs(rep.point) if rep.point != 0 else np.inf
        for j, name in enumerate(ESTIMANDS):
            hits[i, j] = _covers(ci[0], ci[1], mus[name])
    return Replication(
        seed=seed,
        point=rep.point,
        estimands=mus,
        variances={"v_hz": rep.v_hz, "v_vt": rep.v_vt, "v_mix": rep.v_mix_used},
        hits=hits,
        lengths=lengths,
    )


@dataclass(frozen=True)
class CoverageTable:
    """Coverage probability and average normalized length per interval and estimand."""

    cp: np.ndarray  # interval x estimand
    al: np.ndarray  # interval x estimand, constant along estimands
    reps: int
    seed: int
    meta: dict = field(default_factory=dict)

    def cell(self, interval: str, estimand: str) -> tuple[float, float]:
        i, j = INTERVALS.index(interval), ESTIMANDS.index(estimand)
        return float(self.cp[i, j]), float(self.al[i, j])

    def to_dict(self) -> dict:
        return {
            "reps": self.reps,
            "seed": self.seed,
            "intervals": list(INTERVALS),
            "estimands": list(ESTIMANDS),
            "cp": self.cp.tolist(),
            "al": self.al.tolist(),
            "meta": self.meta,
        }


def _chunk(args) -> list[Replication]:
    dgp, seeds, cov_kind, theta = args
    return [run_replication(dgp, s, cov_kind, theta) for s in seeds]


def coverage_study(
    dgp: DgpSpec,
    reps: int,
    seed: int,
    cov_kind: CovKind | str = CovKind.HOMOSKEDASTIC,
    theta: float = 0.05,
    workers: int = 1,
) -> CoverageTable:
    """Aggregate replications with seeds ``seed + 1, ..., seed + reps``.

    ``AL = mean(2 z sqrt(v) / |point|)``. Lengths are summed in seed order,
    so the table is bit-identical for any ``workers``.
    """
    if reps < 1:
        raise ConfigError("reps must be at least 1")
    seeds = list(range(seed + 1, seed + reps + 1))
    if workers > 1:
        chunks = [seeds[i::workers] for i in range(workers)]
        with ProcessPoolExecutor(workers) as ex:
            out = [r for part in ex.map(_chunk, [(dgp, c, cov_kind, theta) for c in chunks]) for r in part]
        out.sort(key=lambda r: r.seed)
    else:
        out = _chunk((dgp, seeds, cov_kind, theta))
    hits = np.sum([r.hits for r in out], axis=0)
    lengths = np.stack([r.lengths for r in out])
    al = np.repeat((lengths.sum(axis=0) / reps)[:, None], 3, axis=1)
    meta = {**dgp.summary(), "cov_kind": CovKind(cov_kind).value, "theta": theta}
    return CoverageTable(cp=hits / reps, al=al, reps=reps, seed=seed, meta=meta)


def write_tables_csv(tables: dict[str, CoverageTable], out: TextIO, digits: int = 4) -> None:
    """Rows ``study x {CP, AL}``, columns ``interval x estimand``."""
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["study", "stat"] + [f"{i}:{e}" for i in INTERVALS for e in ESTIMANDS])
    for name, t in tables.items():
        w.writerow([name, "CP"] + [round(float(x), digits) for x in t.cp.ravel()])
        w.writerow([name, "AL"] + [round(float(x), digits) for x in t.al.ravel()])


def tables_json(tables: dict[str, CoverageTable]) -> str:
    return json.dumps({name: t.to_dict() for name, t in tables.items()}, indent=2)
