"""Design-based estimands from per-cell placebo fits.

Every cell ``(i, t)`` of the panel is refit as if unit ``i`` were treated at
period ``t``: the treated history is ``Y[i, :t]``, the donors are all other
units over ``:t`` and the prediction target is the donors' column ``Y[-i, t]``.
The first period has no history and is masked out.

Averaging the fitted grid over the assignment distribution gives the
estimands under random assignment of the treated period (``Time``), the
treated unit (``Unit``) or both (``Both``).
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass
from enum import Enum
from typing import TextIO

import numpy as np

from .core import Blocks, PanelData, svd_decompose
from .errors import EmptyAverage, NonFiniteInput, UnsupportedMethod
from .estimators import OlsMinNorm, Pcr, fit_symmetric


class Source(str, Enum):
    TIME = "time"
    UNIT = "unit"
    BOTH = "both"


@dataclass(frozen=True)
class PlaceboGrid:
    """Fitted control outcomes ``fitted[i, t]`` with a validity mask.

    ``ks`` records the number of components used per cell (PCR clamps ``k``
    to the rank of small early-period donor blocks; ``0`` on masked cells).
    """

    fitted: np.ndarray
    valid: np.ndarray
    unit_labels: tuple[str, ...]
    time_labels: tuple[str, ...]
    ks: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.fitted.shape


def cell_blocks(outcomes: np.ndarray, unit: int, period: int) -> Blocks:
    """Blocks for the placebo assignment of ``unit`` at ``period`` (``period >= 1``)."""
    others = np.delete(np.arange(outcomes.shape[0]), unit)
    return Blocks(
        y_n=outcomes[unit, :period],
        y0=outcomes[np.ix_(others, np.arange(period))],
        y_t=outcomes[others, period],
        period_index=period,
    )


def placebo_fit_grid(panel: PanelData, method=OlsMinNorm()) -> PlaceboGrid:
    """Fit every cell with a symmetric estimator.

    Parameters
    ----------
    panel : PanelData
        Must be finite everywhere (all cells act as controls for some fit).
    method : OlsMinNorm or Pcr
        For ``Pcr(k)`` each cell uses ``min(k, rank)`` components.

    Returns
    -------
    PlaceboGrid
        ``valid`` is false exactly on the first column.
    """
    if not isinstance(method, (OlsMinNorm, Pcr)):
        raise UnsupportedMethod("placebo grids support OLS and PCR only")
    y = panel.outcomes
    if not np.all(np.isfinite(y)):
        raise NonFiniteInput("placebo grids need a fully observed panel")
    n, t = y.shape
    fitted = np.full((n, t), np.nan)
    valid = np.zeros((n, t), dtype=bool)
    ks = np.zeros((n, t), dtype=int)
    for i in range(n):
        for s in range(1, t):
            blocks = cell_blocks(y, i, s)
            cache = svd_decompose(blocks.y0)
            if isinstance(method, Pcr):
                k = min(method.k, cache.rank)
                m = Pcr(k) if k >= 1 else OlsMinNorm()
            else:
                k, m = cache.rank, method
            fitted[i, s] = fit_symmetric(blocks, m, cache).point
            valid[i, s] = True
            ks[i, s] = k
    return PlaceboGrid(fitted, valid, panel.unit_labels, panel.time_labels, ks)


def _mean(values: np.ndarray) -> float:
    if values.size == 0:
        raise EmptyAverage("no valid cells to average")
    return float(np.mean(values))


def design_estimand(grid: PlaceboGrid, source: Source | str, treated_unit: int, treated_period: int) -> float:
    """Expected fitted outcome under a random assignment.

    ``Time`` averages the treated unit's row over valid periods, ``Unit``
    averages the treated period's column over units and ``Both`` averages
    every valid cell.
    """
    source = Source(source)
    f, ok = grid.fitted, grid.valid
    if source is Source.TIME:
        return _mean(f[treated_unit][ok[treated_unit]])
    if source is Source.UNIT:
        return _mean(f[:, treated_period][ok[:, treated_period]])
    return _mean(f[ok])


def design_estimands(grid: PlaceboGrid, treated_unit: int, treated_period: int) -> dict[str, float]:
    return {s.value: design_estimand(grid, s, treated_unit, treated_period) for s in Source}


def assignments(grid: PlaceboGrid, source: Source | str, treated_unit: int, treated_period: int):
    """Support of the assignment distribution as ``(unit, period)`` pairs.

    Each pair is equally likely. Pairs landing on masked cells are excluded.
    """
    source = Source(source)
    n, t = grid.shape
    units = range(n) if source in (Source.UNIT, Source.BOTH) else [treated_unit]
    periods = range(t) if source in (Source.TIME, Source.BOTH) else [treated_period]
    return [(i, s) for i, s in itertools.product(units, periods) if grid.valid[i, s]]


def enumerate_estimand(grid: PlaceboGrid, source: Source | str, treated_unit: int, treated_period: int) -> float:
    """Brute-force expectation of ``sum_it B_i A_t fitted[i, t]``.

    Builds the unit indicator ``B`` and period indicator ``A`` for every
    equally likely assignment and averages the resulting sums. Agrees with
    :func:`design_estimand` up to rounding.
    """
    support = assignments(grid, source, treated_unit, treated_period)
    if not support:
        raise EmptyAverage("assignment distribution has no valid cells")
    n, t = grid.shape
    f = np.where(grid.valid, grid.fitted, 0.0)
    total = 0.0
    for i, s in support:
        b = np.zeros(n)
        a = np.zeros(t)
        b[i] = 1.0
        a[s] = 1.0
        total += float(b @ f @ a)
    return total / len(support)


def write_grid_csv(grid: PlaceboGrid, out: TextIO) -> None:
    """Long-format ``unit,time,fitted,valid`` rows; masked cells have empty ``fitted``."""
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["unit", "time", "fitted", "valid"])
    n, t = grid.shape
    for i in range(n):
        for s in range(t):
            ok = bool(grid.valid[i, s])
            w.writerow([grid.unit_labels[i], grid.time_labels[s], repr(float(grid.fitted[i, s])) if ok else "", int(ok)])
