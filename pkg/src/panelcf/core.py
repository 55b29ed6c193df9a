"""Panel container, block extraction and shared spectral primitives.

A panel stores outcomes for ``N`` units over ``T`` periods with the treated
unit in the last row. Everything downstream works on three blocks cut from
that matrix for a single post-treatment period:

* ``y_n``: the treated unit's pretreatment outcomes (length ``T0``),
* ``y0``: the control units' pretreatment outcomes (``N0 x T0``),
* ``y_t``: the control units' outcomes at the target period (length ``N0``).

The SVD of ``y0`` is computed once and cached in a :class:`SpectralCache`,
from which pseudoinverses, truncations and projection matrices follow.
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass
from typing import Iterable, Sequence, TextIO

import numpy as np

from .errors import (
    DimensionMismatch,
    DuplicateCell,
    KOutOfRange,
    MissingCell,
    NonFiniteInput,
    PeriodBeforeTreatment,
    T0OutOfRange,
    UnknownTreatedUnit,
)

DEFAULT_RTOL = 1e-10


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class PanelData:
    """Outcome matrix with labels and treatment configuration.

    Rows are ordered so that the treated unit is last; ``treated_unit`` is
    therefore always ``N - 1`` for panels built by :func:`load_panel`, but any
    valid index is accepted and :func:`split_blocks` honours it.
    """

    outcomes: np.ndarray
    unit_labels: tuple[str, ...]
    time_labels: tuple[str, ...]
    treated_unit: int
    t0: int

    def __post_init__(self):
        y = _frozen(self.outcomes)
        if y.ndim != 2:
            raise DimensionMismatch("outcomes must be a 2-d matrix")
        n, t = y.shape
        object.__setattr__(self, "outcomes", y)
        object.__setattr__(self, "unit_labels", tuple(str(u) for u in self.unit_labels))
        object.__setattr__(self, "time_labels", tuple(str(s) for s in self.time_labels))
        if len(self.unit_labels) != n or len(self.time_labels) != t:
            raise DimensionMismatch(
                f"labels ({len(self.unit_labels)}, {len(self.time_labels)}) do not match "
                f"outcomes shape {y.shape}"
            )
        if n < 2:
            raise DimensionMismatch("a panel needs at least two units")
        if not 0 <= self.treated_unit < n:
            raise UnknownTreatedUnit(str(self.treated_unit))
        if not 1 <= self.t0 < t:
            raise T0OutOfRange(self.t0, t)
        controls = np.delete(y, self.treated_unit, axis=0)
        if not (np.all(np.isfinite(controls)) and np.all(np.isfinite(y[self.treated_unit, : self.t0]))):
            raise NonFiniteInput("control block and treated pretreatment row must be finite")

    @property
    def n_units(self) -> int:
        return self.outcomes.shape[0]

    @property
    def n_times(self) -> int:
        return self.outcomes.shape[1]

    @property
    def treated_label(self) -> str:
        return self.unit_labels[self.treated_unit]

    @property
    def post_periods(self) -> range:
        """0-based indices of the post-treatment periods."""
        return range(self.t0, self.n_times)


@dataclass(frozen=True)
class Blocks:
    """Treated history ``y_n``, donor history ``y0`` and donor target ``y_t``."""

    y_n: np.ndarray
    y0: np.ndarray
    y_t: np.ndarray
    period_index: int = -1

    def __post_init__(self):
        y_n, y0, y_t = _frozen(self.y_n), _frozen(self.y0), _frozen(self.y_t)
        if y0.ndim != 2 or y_n.ndim != 1 or y_t.ndim != 1:
            raise DimensionMismatch("expected y0 2-d and y_n, y_t 1-d")
        if y0.shape != (y_t.size, y_n.size):
            raise DimensionMismatch(
                f"y0 has shape {y0.shape}, expected ({y_t.size}, {y_n.size})"
            )
        object.__setattr__(self, "y_n", y_n)
        object.__setattr__(self, "y0", y0)
        object.__setattr__(self, "y_t", y_t)

    @property
    def n0(self) -> int:
        return self.y0.shape[0]

    @property
    def t0(self) -> int:
        return self.y0.shape[1]


@dataclass(frozen=True)
class SpectralCache:
    """Thin SVD of ``y0`` restricted to its numerically nonzero part.

    ``u`` is ``N0 x R``, ``s`` has length ``R`` (strictly positive,
    non-increasing) and ``v`` is ``T0 x R``.
    """

    u: np.ndarray
    s: np.ndarray
    v: np.ndarray
    rtol: float = DEFAULT_RTOL

    def __post_init__(self):
        object.__setattr__(self, "u", _frozen(self.u))
        object.__setattr__(self, "s", _frozen(self.s))
        object.__setattr__(self, "v", _frozen(self.v))

    @property
    def rank(self) -> int:
        return self.s.size

    @property
    def shape(self) -> tuple[int, int]:
        return self.u.shape[0], self.v.shape[0]

    def reconstruct(self) -> np.ndarray:
        return (self.u * self.s) @ self.v.T


@dataclass(frozen=True)
class CenteredBlocks:
    """Twice-centered donor history plus the means removed from it."""

    y0_centered: np.ndarray
    row_means: np.ndarray
    col_means: np.ndarray
    grand_mean: float
    time_intercept: float
    unit_intercept: float


# ---------------------------------------------------------------------------
# loading


def _time_sort_key(labels: Iterable[str]):
    labels = list(labels)
    try:
        values = [float(x) for x in labels]
    except ValueError:
        return sorted(labels)
    return [lab for _, lab in sorted(zip(values, labels))]


def load_panel(
    source: str | os.PathLike | TextIO,
    treated_unit: str,
    t0: int,
    unit_col: str = "unit",
    time_col: str = "time",
    value_col: str = "value",
    delimiter: str = ",",
) -> PanelData:
    """Read a long-format panel and return it with the treated unit last.

    Parameters
    ----------
    source : path or text stream
        Delimited text with a header row. Each ``(unit, time)`` pair must
        appear exactly once.
    treated_unit : str
        Label of the treated unit.
    t0 : int
        Number of pretreatment periods.
    unit_col, time_col, value_col : str
        Column names.
    delimiter : str
        Field separator.

    Returns
    -------
    PanelData
        Times sorted ascending (numerically when every label parses as a
        number), control units in order of first appearance.

    Raises
    ------
    MissingCell, DuplicateCell, UnknownTreatedUnit, T0OutOfRange
    """
    if isinstance(source, (str, os.PathLike)):
        with open(source, newline="", encoding="utf-8") as fh:
            text = fh.read()
        stream: TextIO = io.StringIO(text)
    else:
        stream = source
    reader = csv.DictReader(stream, delimiter=delimiter)
    missing = {unit_col, time_col, value_col} - set(reader.fieldnames or [])
    if missing:
        raise DimensionMismatch(f"input lacks column(s): {sorted(missing)}")

    cells: dict[tuple[str, str], float] = {}
    units: dict[str, None] = {}
    times: dict[str, None] = {}
    for row in reader:
        unit, time = row[unit_col].strip(), row[time_col].strip()
        if (unit, time) in cells:
            raise DuplicateCell(unit, time)
        raw = row[value_col].strip()
        try:
            cells[(unit, time)] = float(raw) if raw else float("nan")
        except ValueError as exc:
            raise NonFiniteInput(f"cannot parse value {raw!r} for ({unit}, {time})") from exc
        units.setdefault(unit)
        times.setdefault(time)

    if treated_unit not in units:
        raise UnknownTreatedUnit(treated_unit)
    unit_order = [u for u in units if u != treated_unit] + [treated_unit]
    time_order = _time_sort_key(times)
    if not 1 <= t0 < len(time_order):
        raise T0OutOfRange(t0, len(time_order))

    y = np.empty((len(unit_order), len(time_order)))
    for i, u in enumerate(unit_order):
        for j, s in enumerate(time_order):
            try:
                y[i, j] = cells[(u, s)]
            except KeyError:
                raise MissingCell(u, s) from None
    return PanelData(y, tuple(unit_order), tuple(time_order), len(unit_order) - 1, t0)


def split_blocks(panel: PanelData, period: int) -> Blocks:
    """Cut the three regression blocks for one post-treatment period.

    ``period`` is a 0-based column index and must be at least ``t0``.
    """
    if not panel.t0 <= period < panel.n_times:
        raise PeriodBeforeTreatment(period, panel.t0)
    y = panel.outcomes
    controls = np.delete(np.arange(panel.n_units), panel.treated_unit)
    y_t = y[controls, period]
    if not np.all(np.isfinite(y_t)):
        raise NonFiniteInput(f"control outcomes at period {period} are not finite")
    return Blocks(
        y_n=y[panel.treated_unit, : panel.t0],
        y0=y[np.ix_(controls, np.arange(panel.t0))],
        y_t=y_t,
        period_index=period,
    )


# ---------------------------------------------------------------------------
# spectral primitives


def svd_decompose(y0: np.ndarray, rtol: float = DEFAULT_RTOL) -> SpectralCache:
    """Thin SVD of ``y0`` keeping singular values above ``rtol * s_1``.

    The zero matrix yields an empty cache (rank 0).
    """
    y0 = np.asarray(y0, dtype=float)
    if y0.ndim != 2 or y0.size == 0:
        raise DimensionMismatch("y0 must be a nonempty 2-d matrix")
    if not np.all(np.isfinite(y0)):
        raise NonFiniteInput("y0 contains non-finite entries")
    u, s, vt = np.linalg.svd(y0, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        r = 0
    else:
        r = int(np.sum(s > rtol * s[0]))
    return SpectralCache(u[:, :r], s[:r], vt[:r].T, rtol)


def pseudoinverse(cache: SpectralCache) -> np.ndarray:
    """Moore-Penrose pseudoinverse ``V diag(1/s) U^T`` (``T0 x N0``)."""
    return (cache.v / cache.s) @ cache.u.T


def rank_k_truncate(cache: SpectralCache, k: int) -> SpectralCache:
    """Keep the leading ``k`` singular triples."""
    if not 1 <= k <= cache.rank:
        raise KOutOfRange(k, cache.rank)
    return SpectralCache(cache.u[:, :k], cache.s[:k], cache.v[:, :k], cache.rtol)


def hat_matrices(cache: SpectralCache) -> tuple[np.ndarray, np.ndarray]:
    """Orthogonal projectors onto the column space (``UU^T``) and row space (``VV^T``)."""
    return cache.u @ cache.u.T, cache.v @ cache.v.T


def trace_inv_sq(cache: SpectralCache) -> float:
    """``tr(Y0^+ (Y0^T)^+) = sum 1/s^2``."""
    return float(np.sum(1.0 / cache.s**2))


def energy_rank(s: np.ndarray, threshold: float = 0.999) -> int:
    """Smallest ``r`` whose leading squared singular values reach ``threshold`` of the total.

    Parameters
    ----------
    s : ndarray
        Singular values in descending order.
    threshold : float
        Fraction in ``(0, 1]``.

    Returns
    -------
    int
        ``0`` when ``s`` is empty or all zero.
    """
    if not 0.0 < threshold <= 1.0:
        raise ValueError("threshold must lie in (0, 1]")
    e = np.asarray(s, dtype=float) ** 2
    total = e.sum()
    if e.size == 0 or total == 0.0:
        return 0
    frac = np.cumsum(e) / total
    # guard against cumulative rounding leaving the last entry just below 1
    frac[-1] = 1.0
    return int(np.searchsorted(frac, threshold, side="left") + 1)


def twice_center(blocks: Blocks) -> CenteredBlocks:
    """Remove row and column means from ``y0`` and record the intercepts."""
    y0 = blocks.y0
    row = y0.mean(axis=1)
    col = y0.mean(axis=0)
    grand = float(y0.mean())
    centered = y0 - row[:, None] - col[None, :] + grand
    return CenteredBlocks(
        y0_centered=_frozen(centered),
        row_means=_frozen(row),
        col_means=_frozen(col),
        grand_mean=grand,
        time_intercept=float(np.mean(blocks.y_t)),
        unit_intercept=float(np.mean(blocks.y_n)),
    )


def panel_to_rows(panel: PanelData) -> list[tuple[str, str, float]]:
    """Long-format ``(unit, time, value)`` rows of a panel."""
    return [
        (u, s, float(panel.outcomes[i, j]))
        for i, u in enumerate(panel.unit_labels)
        for j, s in enumerate(panel.time_labels)
    ]


def panel_from_matrix(
    y: np.ndarray,
    t0: int,
    unit_labels: Sequence[str] | None = None,
    time_labels: Sequence[str] | None = None,
) -> PanelData:
    """Wrap a matrix whose last row is the treated unit."""
    y = np.asarray(y, dtype=float)
    n, t = y.shape
    units = unit_labels or [f"u{i}" for i in range(n)]
    times = time_labels or [str(j) for j in range(t)]
    return PanelData(y, tuple(units), tuple(times), n - 1, t0)
