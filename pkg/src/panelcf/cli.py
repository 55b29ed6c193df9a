"""Command-line interface.

Subcommands
-----------
datasets   list manifest datasets and whether their files are present
analyze    point estimates and intervals for every post-treatment period
compare    HZ and VT points of all six estimators per period (long CSV)
simulate   calibrated coverage study for one or more panels
design     design-based estimands and the placebo grid

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
error. Diagnostics go to stderr as a single line.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .core import PanelData, load_panel, split_blocks, svd_decompose
from .datasets import dataset_path, file_digest, load_dataset, manifest
from .design import design_estimands, placebo_fit_grid, write_grid_csv
from .errors import ConfigError, DataError, PanelcfError
from .estimators import (
    SYMMETRIC,
    Direction,
    ElasticNet,
    Lasso,
    OlsMinNorm,
    Pcr,
    Ridge,
    Simplex,
    fit,
    method_params,
    select_k,
)
from .inference import analyze_period
from .sim import build_dgp, coverage_study, tables_json, write_tables_csv

SCHEMA_VERSION = 1
METHODS = ("ols", "pcr", "ridge", "lasso", "enet", "simplex")
DEFAULTS = {"lambda1": 1.0, "lambda2": 1.0, "lam": 1e-6, "energy": 0.999}


# ---------------------------------------------------------------------------
# io helpers


def atomic_write(path: str | os.PathLike, text: str) -> None:
    """Write ``text`` to a temporary sibling file, then rename it over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def emit(text: str, out: Optional[str]) -> None:
    if out:
        atomic_write(out, text)
    else:
        sys.stdout.write(text)


@dataclass(frozen=True)
class LoadedInput:
    panel: PanelData
    path: Path
    digest: str
    name: str


def _load(args) -> LoadedInput:
    """Resolve ``--dataset`` or ``--data`` into a panel plus provenance."""
    if getattr(args, "dataset", None):
        path = dataset_path(args.dataset)
        panel = load_dataset(args.dataset)
        return LoadedInput(panel, path, file_digest(path), args.dataset)
    if not args.data:
        raise ConfigError("one of --data or --dataset is required")
    if args.treated is None or args.t0 is None:
        raise ConfigError("--data requires --treated and --t0")
    path = Path(args.data)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    panel = load_panel(path, args.treated, args.t0, args.unit_col, args.time_col, args.value_col, args.delimiter)
    return LoadedInput(panel, path, file_digest(path), path.name)


def _provenance(src: LoadedInput, args) -> dict:
    expected = getattr(args, "expect_digest", None)
    if expected and expected != src.digest:
        print(f"warning: input digest {src.digest} differs from expected {expected}", file=sys.stderr)
    return {
        "toolkit": "panelcf",
        "version": __version__,
        "schema_version": SCHEMA_VERSION,
        "input": str(src.path),
        "input_sha256": src.digest,
        "digest_matches": None if not expected else expected == src.digest,
    }


def _positive(name: str, value: Optional[float]) -> None:
    if value is not None and not value > 0:
        raise ConfigError(f"{name} must be positive")


def _build_method(name: str, args, panel: PanelData, direction: Direction = Direction.HZ):
    """Method object for ``name`` with flag values or documented defaults."""
    lambda1 = DEFAULTS["lambda1"] if args.lambda1 is None else args.lambda1
    lambda2 = DEFAULTS["lambda2"] if args.lambda2 is None else args.lambda2
    lam = DEFAULTS["lam"] if args.lam is None else args.lam
    _positive("--lambda1", lambda1)
    _positive("--lambda2", lambda2)
    if lam < 0:
        raise ConfigError("--lambda must be nonnegative")
    if name == "ols":
        return OlsMinNorm()
    if name == "pcr":
        if args.k is None:
            cache = svd_decompose(split_blocks(panel, panel.t0).y0)
            return Pcr(select_k(cache, DEFAULTS["energy"]))
        return Pcr(args.k)
    if name == "ridge":
        return Ridge(lambda2)
    if name == "lasso":
        return Lasso(lambda1, direction)
    if name == "enet":
        return ElasticNet(lambda1, lambda2, direction)
    if name == "simplex":
        return Simplex(lam, direction)
    raise ConfigError(f"unknown method {name!r}")


# ---------------------------------------------------------------------------
# commands


def cmd_datasets(args) -> int:
    rows = []
    for name, info in manifest().items():
        path = dataset_path(name)
        rows.append({
            "name": name,
            "treated": info.treated,
            "t0": info.t0,
            "N": info.n_units,
            "T": info.n_times,
            "available": path is not None,
            "path": str(path) if path else None,
        })
    emit(json.dumps(rows, indent=2) + "\n", None)
    return 0


def _ci_fields(ci) -> list:
    return [None, None] if ci is None else [ci[0], ci[1]]


def cmd_analyze(args) -> int:
    if not 0 < args.alpha < 1:
        raise ConfigError("--alpha must lie in (0, 1)")
    src = _load(args)
    panel = src.panel
    method = _build_method(args.method, args, panel)
    symmetric = isinstance(method, SYMMETRIC)
    wanted = ("hz", "vt", "mix") if args.interval == "all" else ("mix" if args.interval == "mixed" else args.interval,)
    records = []
    for period in panel.post_periods:
        blocks = split_blocks(panel, period)
        rec = {"period": panel.time_labels[period]}
        if symmetric:
            rep = analyze_period(blocks, method, args.cov, args.alpha)
            rec.update(point=rep.point, point_hz=rep.point_hz, point_vt=rep.point_vt)
            rec.update(v_hz=rep.v_hz, v_vt=rep.v_vt, v_mix=rep.v_mix, v_mix_used=rep.v_mix_used)
            for key in wanted:
                rec[f"ci_{key}"] = getattr(rep, f"ci_{key}")
            rec["flags"] = {**rep.degeneracy, "mix_fallback_used": rep.mix_fallback_used, **rep.flags}
            rec["bounds"] = rep.bounds
            rec["rank"] = rep.rank
        else:
            hz = fit(blocks, _build_method(args.method, args, panel, Direction.HZ))
            vt = fit(blocks, _build_method(args.method, args, panel, Direction.VT))
            rec.update(point_hz=hz.point_hz, point_vt=vt.point_vt)
            rec["flags"] = {"intervals_available": False}
        records.append(rec)
    config = {
        "dataset": src.name,
        "treated": panel.treated_label,
        "t0": panel.t0,
        "method": method_params(method),
        "cov": args.cov if symmetric else None,
        "alpha": args.alpha,
        "interval": args.interval,
    }
    run = {"config": config, "records": records, "provenance": _provenance(src, args)}
    if args.format == "json":
        text = json.dumps(run, indent=2, default=_json_default) + "\n"
    else:
        text = _analysis_csv(records, wanted, symmetric)
    emit(text, args.out)
    return 0


def _json_default(o):
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(type(o))


def _analysis_csv(records: list[dict], wanted, symmetric: bool) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if not symmetric:
        w.writerow(["period", "point_hz", "point_vt"])
        for r in records:
            w.writerow([r["period"], r["point_hz"], r["point_vt"]])
        return buf.getvalue()
    ci_cols = [f"ci_{k}_{end}" for k in wanted for end in ("lo", "hi")]
    head = ["period", "point", "point_hz", "point_vt", "v_hz", "v_vt", "v_mix", "v_mix_used"]
    head += ci_cols + ["hz_degenerate", "vt_degenerate", "mix_fallback_used"]
    w.writerow(head)
    for r in records:
        row = [r[k] for k in head[:8]]
        for k in wanted:
            row += _ci_fields(r[f"ci_{k}"])
        row += [int(r["flags"][k]) for k in head[-3:]]
        w.writerow(row)
    return buf.getvalue()


def cmd_compare(args) -> int:
    src = _load(args)
    panel = src.panel
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["period", "method", "direction", "point"])
    for period in panel.post_periods:
        blocks = split_blocks(panel, period)
        cache = svd_decompose(blocks.y0)
        for name in METHODS:
            for d in (Direction.HZ, Direction.VT):
                m = _build_method(name, args, panel, d)
                res = fit(blocks, m, cache)
                point = res.point_hz if d is Direction.HZ else res.point_vt
                w.writerow([panel.time_labels[period], name, d.value, repr(float(point))])
    emit(buf.getvalue(), args.out)
    return 0


def _sim_sources(args) -> list[LoadedInput]:
    if args.dataset and args.data:
        raise ConfigError("use either --dataset or --data")
    if args.data:
        return [_load(args)]
    names = args.dataset or ["all"]
    if "all" in names:
        names = []
        for name in manifest():
            if dataset_path(name) is None:
                print(f"warning: skipping unavailable dataset {name!r}", file=sys.stderr)
            else:
                names.append(name)
        if not names:
            raise DataError("no datasets available")
    out = []
    for name in names:
        ns = argparse.Namespace(**{**vars(args), "dataset": name})
        out.append(_load(ns))
    return out


def cmd_simulate(args) -> int:
    if args.reps < 1:
        raise ConfigError("--reps must be at least 1")
    if not 0 < args.energy <= 1:
        raise ConfigError("--energy must lie in (0, 1]")
    if args.workers < 1:
        raise ConfigError("--workers must be at least 1")
    tables = {}
    provenance = {}
    for src in _sim_sources(args):
        dgp = build_dgp(src.panel, args.energy, args.residual_basis)
        tables[src.name] = coverage_study(dgp, args.reps, args.seed, args.cov, args.alpha, args.workers)
        provenance[src.name] = _provenance(src, args)
    buf = io.StringIO()
    write_tables_csv(tables, buf)
    meta = json.loads(tables_json(tables))
    meta = {"tables": meta, "provenance": provenance}
    if args.out:
        atomic_write(args.out, buf.getvalue())
        atomic_write(Path(args.out).with_suffix(".json"), json.dumps(meta, indent=2) + "\n")
    else:
        sys.stdout.write(buf.getvalue())
    return 0


def cmd_design(args) -> int:
    src = _load(args)
    panel = src.panel
    if args.method not in ("ols", "pcr"):
        raise ConfigError("design supports --method ols or pcr")
    method = OlsMinNorm() if args.method == "ols" else Pcr(args.k if args.k is not None else _build_method("pcr", args, panel).k)
    grid = placebo_fit_grid(panel, method)
    period = panel.t0 if args.period is None else args.period
    est = design_estimands(grid, panel.treated_unit, period)
    out = {
        "estimands": est,
        "treated_unit": panel.treated_label,
        "treated_period": panel.time_labels[period],
        "valid_periods": int(grid.valid[panel.treated_unit].sum()),
        "grid_shape": list(grid.shape),
        "method": method_params(method),
        "provenance": _provenance(src, args),
    }
    if args.grid_out:
        buf = io.StringIO()
        write_grid_csv(grid, buf)
        atomic_write(args.grid_out, buf.getvalue())
    emit(json.dumps(out, indent=2) + "\n", args.out)
    return 0


# ---------------------------------------------------------------------------
# parser


def _data_flags(p: argparse.ArgumentParser, multi: bool = False) -> None:
    g = p.add_argument_group("data")
    g.add_argument("--data", help="long-format delimited file")
    if multi:
        g.add_argument("--dataset", action="append", help="manifest dataset name or 'all' (repeatable)")
    else:
        g.add_argument("--dataset", help="manifest dataset name")
    g.add_argument("--unit-col", default="unit")
    g.add_argument("--time-col", default="time")
    g.add_argument("--value-col", default="value")
    g.add_argument("--delimiter", default=",")
    g.add_argument("--treated", help="treated unit label")
    g.add_argument("--t0", type=int, help="number of pretreatment periods")
    g.add_argument("--expect-digest", help="warn when the input's sha256 differs")


def _hyper_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("hyperparameters")
    g.add_argument("--k", type=int, help="PCR components (default: 99.9%% energy rule)")
    g.add_argument("--lambda2", type=float, help="ridge / elastic-net penalty (default 1.0)")
    g.add_argument("--lambda1", type=float, help="lasso / elastic-net penalty (default 1.0)")
    g.add_argument("--lambda", dest="lam", type=float, help="simplex ridge penalty (default 1e-6)")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="panelcf", description="Panel counterfactual estimation and inference.")
    p.add_argument("--version", action="version", version=f"panelcf {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("datasets", help="list known datasets")
    d.set_defaults(func=cmd_datasets)

    a = sub.add_parser("analyze", help="estimates and intervals per post-treatment period")
    _data_flags(a)
    a.add_argument("--method", choices=METHODS, default="ols")
    _hyper_flags(a)
    a.add_argument("--interval", choices=("hz", "vt", "mixed", "all"), default="all")
    a.add_argument("--cov", choices=("homo", "jack", "hrk"), default="homo")
    a.add_argument("--alpha", type=float, default=0.05, help="1 - coverage level")
    a.add_argument("--out")
    a.add_argument("--format", choices=("json", "csv"), default="json")
    a.set_defaults(func=cmd_analyze)

    c = sub.add_parser("compare", help="all estimators, both directions, per period")
    _data_flags(c)
    _hyper_flags(c)
    c.add_argument("--out")
    c.set_defaults(func=cmd_compare)

    s = sub.add_parser("simulate", help="calibrated coverage study")
    _data_flags(s, multi=True)
    s.add_argument("--reps", type=int, default=500)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--energy", type=float, default=DEFAULTS["energy"])
    s.add_argument("--residual-basis", choices=("truncated", "observed"), default="truncated")
    s.add_argument("--cov", choices=("homo", "jack", "hrk"), default="homo")
    s.add_argument("--alpha", type=float, default=0.05)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--out", help="CSV path; metadata is written next to it with a .json suffix")
    s.set_defaults(func=cmd_simulate)

    g = sub.add_parser("design", help="design-based estimands")
    _data_flags(g)
    g.add_argument("--method", choices=("ols", "pcr"), default="ols")
    _hyper_flags(g)
    g.add_argument("--period", type=int, help="0-based treated period (default: first post period)")
    g.add_argument("--grid-out", help="write the placebo grid as CSV")
    g.add_argument("--out")
    g.set_defaults(func=cmd_design)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except PanelcfError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
