"""Command-line entry point: ``rotkld <subcommand> ...``.

Boxes come in as JSON lines, one record per line::

    {"id": "a", "x": 0, "y": 0, "w": 2, "h": 2, "theta": 0}
    {"id": "b", "x": 0, "y": 0, "w": 4, "h": 4, "theta": 30, "angle_unit": "deg"}

Commands that take pairs read consecutive lines two at a time.

Exit codes: 0 success, 1 check failure, 2 parse or usage error, 3 degenerate box.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass

from . import fitter, gradients, landscape, selftest
from .gaussian import DistanceKind, box_distance
from .geometry import RotatedBox, SizeDegenerate, rotated_iou
from .loss import LossConfig, Transform

EXIT_OK = 0
EXIT_CHECK = 1
EXIT_PARSE = 2
EXIT_DOMAIN = 3

RECORD_FIELDS = ("id", "x", "y", "w", "h", "theta", "angle_unit")
ANGLE_UNITS = ("rad", "deg")


class ParseError(ValueError):
    """Malformed input; the message names the offending line."""


@dataclass(frozen=True)
class BoxRecord:
    id: str
    box: RotatedBox


def _number(rec, key, where):
    v = rec.get(key)
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ParseError(f"{where}: field {key!r} must be a number, got {v!r}")
    if not math.isfinite(v):
        raise ParseError(f"{where}: field {key!r} is not finite")
    return float(v)


def parse_record(text: str, where: str = "line 1", default_unit: str = "rad") -> BoxRecord:
    """One JSON object -> BoxRecord.

    Raises:
        ParseError: bad JSON, missing or unknown fields, wrong types.
        SizeDegenerate: w or h at or below the size floor.
    """
    try:
        rec = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{where}: invalid JSON ({exc.msg})") from None
    if not isinstance(rec, dict):
        raise ParseError(f"{where}: expected a JSON object")
    unknown = sorted(set(rec) - set(RECORD_FIELDS))
    if unknown:
        raise ParseError(f"{where}: unknown field(s) {', '.join(unknown)}")
    missing = [k for k in ("x", "y", "w", "h", "theta") if k not in rec]
    if missing:
        raise ParseError(f"{where}: missing field(s) {', '.join(missing)}")
    unit = rec.get("angle_unit", default_unit)
    if unit not in ANGLE_UNITS:
        raise ParseError(f"{where}: angle_unit must be 'rad' or 'deg', got {unit!r}")
    x, y, w, h, th = (_number(rec, k, where) for k in ("x", "y", "w", "h", "theta"))
    if unit == "deg":
        th = math.radians(th)
    rid = rec.get("id", where.replace(" ", ""))
    if not isinstance(rid, (str, int)) or isinstance(rid, bool):
        raise ParseError(f"{where}: field 'id' must be a string")
    try:
        box = RotatedBox(x, y, w, h, th)
    except SizeDegenerate as exc:
        raise SizeDegenerate(f"{where}: {exc}") from None
    return BoxRecord(str(rid), box)


def read_records(stream, default_unit: str = "rad") -> list:
    """Parse every non-blank line of a JSON-lines stream."""
    out = []
    for lineno, line in enumerate(stream, 1):
        if line.strip():
            out.append(parse_record(line, f"line {lineno}", default_unit))
    return out


def _pairs(records):
    if len(records) % 2:
        raise ParseError(f"line {len(records)}: odd number of records; pairs are read two at a time")
    return [(records[i], records[i + 1]) for i in range(0, len(records), 2)]


def _open_input(path):
    if path in (None, "-"):
        return sys.stdin
    return open(path, encoding="utf-8")


def _load(path, unit):
    stream = _open_input(path)
    try:
        return read_records(stream, unit)
    finally:
        if stream is not sys.stdin:
            stream.close()


def _inline_or_file(args, unit):
    if args.box:
        return [parse_record(t, f"argument {i}", unit) for i, t in enumerate(args.box, 1)]
    return _load(args.input, unit)


def _emit(text: str, out_path):
    if out_path:
        with open(out_path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def cmd_distance(args) -> int:
    kind = DistanceKind.parse(args.kind)
    rows = []
    for a, b in _pairs(_inline_or_file(args, args.angle_unit)):
        rows.append([a.id, b.id, kind.value, fitter.fmt(box_distance(kind, a.box, b.box))])
    _emit(_csv(["id_a", "id_b", "kind", "distance"], rows), args.out)
    return EXIT_OK


def cmd_iou(args) -> int:
    rows = []
    for a, b in _pairs(_inline_or_file(args, args.angle_unit)):
        rows.append([a.id, b.id, fitter.fmt(rotated_iou(a.box, b.box))])
    _emit(_csv(["id_a", "id_b", "iou"], rows), args.out)
    return EXIT_OK


def _parse_range(values, sweep, unit):
    lo, hi = values
    if sweep == "theta" and unit == "deg":
        lo, hi = math.radians(lo), math.radians(hi)
    return lo, hi


def cmd_landscape(args) -> int:
    columns = [c for c in args.kind.split(",") if c.strip()]
    if args.figure_ls:
        lo, hi = args.range if args.range else (1.0, 10.0)
        ls = landscape.figure_ls(lo, hi, args.steps, columns)
    elif args.figure_pr:
        if args.sweep is None or args.range is None:
            raise ParseError("--figure-pr needs --sweep and --range")
        lo, hi = _parse_range(args.range, args.sweep, args.angle_unit)
        ls = landscape.figure_pr(args.sweep, lo, hi, args.steps, columns)
    else:
        if args.target is None or args.sweep is None or args.range is None:
            raise ParseError("landscape needs --target, --sweep and --range (or a figure flag)")
        target = parse_record(args.target, "--target", args.angle_unit).box
        pred = parse_record(args.pred, "--pred", args.angle_unit).box if args.pred else None
        lo, hi = _parse_range(args.range, args.sweep, args.angle_unit)
        ls = landscape.landscape(target, args.sweep, lo, hi, args.steps, columns, pred=pred)
    _emit(ls.to_csv(), args.out)
    if args.svg:
        with open(args.svg, "w", encoding="utf-8", newline="") as fh:
            fh.write(landscape.to_svg(ls, title=f"distance vs {ls.sweep}"))
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    if args.trials < 1:
        raise ParseError("--trials must be >= 1")
    kinds = list(DistanceKind) if args.kind == "all" else [DistanceKind.parse(args.kind)]
    code = EXIT_OK
    for kind in kinds:
        rep = gradients.grad_check(kind, trials=args.trials, tolerance=args.tol, seed=args.seed)
        line = (f"{kind.value}: trials {rep.trials}, failures {len(rep.failures)}, "
                f"max rel error {rep.max_rel_error:.3e} (tol {rep.tolerance:g})")
        if not rep.passed:
            idx, err, p, t = rep.worst()
            line += f"; worst trial {idx} error {err:.3e} pred {p.as_tuple()} target {t.as_tuple()}"
            code = EXIT_CHECK
        print(line)
    return code


def _fit_config(args) -> fitter.FitConfig:
    text = ""
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            text = fh.read()
    try:
        cfg = fitter.FitConfig.from_text(text)
    except ValueError as exc:
        raise ParseError(f"{args.config}: {exc}") from None
    over = {}
    if args.steps is not None:
        over["max_steps"] = args.steps
    if args.seed is not None:
        over["seed"] = args.seed
    if args.kind or args.transform or args.tau is not None:
        if args.kind and args.kind.lower() == "smooth_l1":
            cfg = fitter.default_fit_config(None)
        else:
            base = cfg.loss or LossConfig()
            loss = LossConfig(DistanceKind.parse(args.kind) if args.kind else base.kind,
                              Transform.parse(args.transform) if args.transform else base.transform,
                              args.tau if args.tau is not None else base.tau)
            keep = {k: getattr(cfg, k) for k in ("max_steps", "stop_iou", "seed")}
            cfg = fitter.default_fit_config(loss, **keep)
    return fitter.FitConfig(**{**cfg.__dict__, **over})


def cmd_fit(args) -> int:
    cfg = _fit_config(args)
    records = _inline_or_file(args, args.angle_unit)
    if len(records) != 2:
        raise ParseError(f"fit needs exactly two records (init, target), got {len(records)}")
    trace = fitter.fit_box(records[0].box, records[1].box, cfg)
    if args.out:
        _emit(trace.to_csv(), args.out)
    print(trace.summary())
    return EXIT_OK


def cmd_selftest(args) -> int:
    return selftest.run(fault=args.inject_fault, timing=args.timing)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rotkld", description="Gaussian distances and losses for rotated boxes.")
    sub = p.add_subparsers(dest="command", required=True)
    kinds = ", ".join(k.value for k in DistanceKind)

    def box_inputs(sp):
        sp.add_argument("input", nargs="?", default="-", help="JSON-lines file ('-' for stdin)")
        sp.add_argument("--box", action="append", metavar="JSON", help="inline record; repeat instead of a file")
        sp.add_argument("--angle-unit", choices=ANGLE_UNITS, default="rad",
                        help="unit for records that omit angle_unit")
        sp.add_argument("--out", help="write CSV here instead of stdout")

    sp = sub.add_parser("distance", help="distance per pair of records")
    box_inputs(sp)
    sp.add_argument("--kind", default="kld_forward", help=f"one of: {kinds}")
    sp.set_defaults(func=cmd_distance)

    sp = sub.add_parser("iou", help="rotated IoU per pair of records")
    box_inputs(sp)
    sp.set_defaults(func=cmd_iou)

    sp = sub.add_parser("landscape", help="distance versus one swept parameter")
    sp.add_argument("--target", metavar="JSON", help="target record")
    sp.add_argument("--pred", metavar="JSON", help="predicted record (default: copy of target)")
    sp.add_argument("--sweep", choices=landscape.SWEEP_PARAMS)
    sp.add_argument("--range", nargs=2, type=float, metavar=("LO", "HI"))
    sp.add_argument("--steps", type=int, default=50)
    sp.add_argument("--kind", default="kld_forward,gwd,l2", help="comma list of kinds, l2, or all")
    sp.add_argument("--angle-unit", choices=ANGLE_UNITS, default="rad")
    sp.add_argument("--figure-ls", action="store_true", help="joint scale sweep fixture")
    sp.add_argument("--figure-pr", action="store_true", help="target heights 1..4 fixture")
    sp.add_argument("--out", help="CSV path (default stdout)")
    sp.add_argument("--svg", help="also render an SVG here")
    sp.set_defaults(func=cmd_landscape)

    sp = sub.add_parser("gradcheck", help="analytic vs finite-difference gradients")
    sp.add_argument("--kind", default="kld_forward", help=f"one of: {kinds}, or all")
    sp.add_argument("--trials", type=int, default=1000)
    sp.add_argument("--tol", type=float, default=1e-5)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_gradcheck)

    sp = sub.add_parser("fit", help="fit an init box to a target box")
    box_inputs(sp)
    sp.add_argument("--config", help="key=value fit config file")
    sp.add_argument("--kind", help=f"override loss kind ({kinds}, smooth_l1)")
    sp.add_argument("--transform", help="sqrt, log1p or none")
    sp.add_argument("--tau", type=float)
    sp.add_argument("--steps", type=int, help="step budget")
    sp.add_argument("--seed", type=int)
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("selftest", help="run the seeded invariant suite")
    sp.add_argument("--timing", action="store_true")
    sp.add_argument("--inject-fault", choices=sorted(selftest.FAULTS), help=argparse.SUPPRESS)
    sp.set_defaults(func=cmd_selftest)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SizeDegenerate as exc:
        print(f"rotkld: degenerate box: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except (ParseError, ValueError, OSError) as exc:
        print(f"rotkld: error: {exc}", file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
