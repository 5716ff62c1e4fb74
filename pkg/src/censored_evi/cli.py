"""Command-line interface.

Input files are CSV with header ``time,status`` (status 1 = event observed,
0 = censored).  Exit codes: 0 success, 2 usage or input error, 3 fully
censored tail.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from .bootstrap import UnstableBootstrapError, bootstrap_ci
from .core import (
    TABLE_ORDER,
    CensoredSample,
    DomainError,
    EstimatorId,
    FullyCensoredTailError,
    censoring_path,
    k_from_fraction,
    make_tail_view,
)
from .distributions import study_model
from .registry import estimate
from .simulation import StudyConfig, emit_table, run_study
from .threshold import agreement_objective, estimate_paths, k_opt

EXIT_OK, EXIT_USAGE, EXIT_CENSORED = 0, 2, 3


class InputError(Exception):
    """Unreadable or malformed input; maps to exit code 2."""


def read_survival_csv(path: str | Path) -> CensoredSample:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror or exc}") from exc
    return parse_survival_csv(text, str(path))


def parse_survival_csv(text: str, name: str = "<input>") -> CensoredSample:
    rows = csv.reader(io.StringIO(text))
    header = next(rows, None)
    if header is None:
        raise InputError(f"{name}: empty file")
    if [h.strip().lower() for h in header] != ["time", "status"]:
        raise InputError(f"{name}:1: expected header 'time,status', got {','.join(header)!r}")
    z, delta = [], []
    for row in rows:
        line = rows.line_num
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 2:
            raise InputError(f"{name}:{line}: expected 2 fields, got {len(row)}")
        try:
            t = float(row[0])
        except ValueError:
            raise InputError(f"{name}:{line}: time {row[0]!r} is not a number") from None
        if not (math.isfinite(t) and t > 0):
            raise InputError(f"{name}:{line}: time must be a positive finite number, got {row[0]!r}")
        s = row[1].strip()
        if s not in ("0", "1"):
            raise InputError(f"{name}:{line}: status must be 0 or 1, got {row[1]!r}")
        z.append(t)
        delta.append(int(s))
    if not z:
        raise InputError(f"{name}: no data rows")
    return CensoredSample(np.asarray(z), np.asarray(delta))


def format_survival_csv(sample: CensoredSample) -> str:
    lines = ["time,status"] + [f"{t!r},{d}" for t, d in sample.records]
    return "\n".join(lines) + "\n"


def _estimators(spec: str | None) -> list[EstimatorId]:
    if not spec:
        return list(TABLE_ORDER)
    try:
        return [EstimatorId.parse(s) for s in spec.split(",") if s.strip()]
    except (ValueError, KeyError) as exc:
        raise InputError(str(exc)) from None


def _render(records: list[dict], fmt: str) -> str:
    if fmt == "json":
        clean = [{k: (None if isinstance(v, float) and not math.isfinite(v) else v) for k, v in r.items()} for r in records]
        return json.dumps(clean, indent=2) + "\n"
    if not records:
        return ""
    cols = list(records[0])
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for r in records:
            w.writerow([repr(v) if isinstance(v, float) else v for v in r.values()])
        return buf.getvalue()
    cells = [[f"{v:.4f}" if isinstance(v, float) else str(v) for v in r.values()] for r in records]
    widths = [max(len(c), *(len(row[i]) for row in cells)) for i, c in enumerate(cols)]
    lines = ["  ".join(c.rjust(w) for c, w in zip(cols, widths))]
    lines += ["  ".join(c.rjust(w) for c, w in zip(row, widths)) for row in cells]
    return "\n".join(lines) + "\n"


def _resolve_k(args, n: int) -> int:
    if (args.k is None) == (args.k_frac is None):
        raise InputError("give exactly one of --k and --k-frac")
    if args.k is not None:
        if not 1 <= args.k <= n - 1:
            raise InputError(f"--k must lie in [1, {n - 1}], got {args.k}")
        return args.k
    try:
        return k_from_fraction(args.k_frac, n)
    except DomainError as exc:
        raise InputError(str(exc)) from None


def cmd_estimate(args) -> int:
    sample = read_survival_csv(args.input)
    k = _resolve_k(args, sample.n)
    view = make_tail_view(sample, k)
    if view.p_hat == 0:
        raise FullyCensoredTailError(f"all {k} top observations are censored")
    if args.boot is not None and args.seed is None:
        raise InputError("--boot needs --seed")
    records = []
    for eid in _estimators(args.estimators):
        rec = {"estimator": eid.value, "k": k, "p_hat": view.p_hat}
        try:
            with np.errstate(all="ignore"):
                res = estimate(view, eid, ww_variant=args.ww_variant)
            rec["raw"], rec["adapted"], rec["error"] = res.raw, res.adapted, ""
            rec.update({key: float(val) for key, val in res.aux.items()} if args.aux else {})
        except DomainError as exc:
            rec["raw"] = rec["adapted"] = math.nan
            rec["error"] = str(exc)
        if args.boot is not None:
            rec["lower"] = rec["upper"] = math.nan
            if math.isfinite(rec["adapted"]):
                try:
                    ci = bootstrap_ci(sample, eid, k, B=args.boot, alpha=args.alpha, d=args.d,
                                      seed=args.seed, ww_variant=args.ww_variant)
                    rec["lower"], rec["upper"] = ci.lower, ci.upper
                except UnstableBootstrapError as exc:
                    rec["error"] = str(exc)
        records.append(rec)
    sys.stdout.write(_render(records, args.format))
    return EXIT_OK


def cmd_simulate(args) -> int:
    if not 0 < args.censor < 1:
        raise InputError(f"--censor must lie strictly between 0 and 1, got {args.censor}")
    if not args.gamma1 > 0:
        raise InputError("--gamma1 must be > 0")
    try:
        config = StudyConfig(
            study_model(args.dist, args.gamma1), args.censor, n=args.n, k_fraction=args.k_frac,
            estimators=tuple(_estimators(args.estimators)), R=args.reps, B=args.boot,
            alpha=args.alpha, d=args.d, seed=args.seed, ww_variant=args.ww_variant,
        )
        k_from_fraction(config.k_fraction, config.n)
    except DomainError as exc:
        raise InputError(str(exc)) from None
    metrics = run_study(config, workers=args.workers)
    sys.stdout.write(emit_table(metrics, args.format))
    return EXIT_OK


def cmd_kopt(args) -> int:
    sample = read_survival_csv(args.input)
    if args.k_min > args.k_max:
        raise InputError(f"--k-min {args.k_min} exceeds --k-max {args.k_max}")
    if args.k_min < 1 or args.k_max > sample.n - 1:
        raise InputError(f"k range must lie within [1, {sample.n - 1}]")
    eids = _estimators(args.estimators)
    if len(eids) < 2:
        raise InputError("--estimators needs at least two estimators")
    paths = estimate_paths(sample, eids, np.arange(args.k_min, args.k_max + 1), ww_variant=args.ww_variant)
    ks, obj = agreement_objective(paths, args.k_min, args.k_max)
    best = k_opt(paths, args.k_min, args.k_max)
    records = []
    for i, k in enumerate(ks):
        rec = {"k": int(k), "objective": float(obj[i])}
        if args.paths:
            rec.update({p.estimator_id.value: float(p.estimates[i]) for p in paths})
        records.append(rec)
    if args.format == "json":
        clean = json.loads(_render(records, "json"))
        sys.stdout.write(json.dumps({"k_opt": best, "path": clean}, indent=2) + "\n")
    else:
        sys.stdout.write(f"# k_opt={best}\n" + _render(records, args.format))
    return EXIT_OK


def cmd_censor_path(args) -> int:
    sample = read_survival_csv(args.input)
    if sample.n < 2:
        raise InputError("need at least two observations")
    ks, p_hat = censoring_path(sample)
    records = [{"k": int(k), "p_hat": float(p)} for k, p in zip(ks, p_hat)]
    sys.stdout.write(_render(records, args.format))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="censored-evi", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    fmt = {"choices": ("csv", "json", "text"), "default": "text"}
    variant = {"choices": ("as_printed", "consecutive_spacings")}

    p = sub.add_parser("estimate", help="adapted EVI estimates at one k")
    p.add_argument("input")
    p.add_argument("--k", type=int)
    p.add_argument("--k-frac", type=float)
    p.add_argument("--estimators", help="comma-separated list (default: all)")
    p.add_argument("--ww-variant", default="as_printed", **variant)
    p.add_argument("--aux", action="store_true", help="include auxiliary parameters")
    p.add_argument("--boot", type=int, help="bootstrap replicates for a percentile interval")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--d", type=int, default=1)
    p.add_argument("--seed", type=int)
    p.add_argument("--format", **fmt)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("simulate", help="Monte Carlo table for one design cell")
    p.add_argument("--dist", required=True, choices=("burr", "pareto", "frechet", "lomax"))
    p.add_argument("--gamma1", type=float, required=True)
    p.add_argument("--censor", type=float, required=True)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--k-frac", type=float, default=0.10)
    p.add_argument("--reps", type=int, default=200)
    p.add_argument("--boot", type=int, default=200)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--d", type=int, default=1)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--estimators", help="comma-separated list (default: all)")
    p.add_argument("--ww-variant", default="consecutive_spacings", **variant)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--format", **fmt)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("kopt", help="choose k by estimator agreement")
    p.add_argument("input")
    p.add_argument("--estimators", required=True)
    p.add_argument("--k-min", type=int, required=True)
    p.add_argument("--k-max", type=int, required=True)
    p.add_argument("--ww-variant", default="as_printed", **variant)
    p.add_argument("--paths", action="store_true", help="include per-k estimates")
    p.add_argument("--format", **fmt)
    p.set_defaults(func=cmd_kopt)

    p = sub.add_parser("censor-path", help="proportion of noncensored top-k observations")
    p.add_argument("input")
    p.add_argument("--format", choices=("csv", "json", "text"), default="csv")
    p.set_defaults(func=cmd_censor_path)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FullyCensoredTailError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CENSORED
    except (InputError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
