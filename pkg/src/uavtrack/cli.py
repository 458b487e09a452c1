"""Command-line entry point: ``simulate``, ``track``, ``eval`` and ``sweep``.

Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

from . import formats, simgen
from .experiments import DEFAULT_VARIANTS, VARIANTS, CellResult, pred_frames, run_bundle, variant_config
from .metrics import MetricsError, evaluate
from .types import ConfigError, TrackerConfig

log = logging.getLogger("uavtrack")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2
CSV_COLUMNS = ("variant", "k", "idf1", "mota", "ids", "fp", "fn", "mt", "ml", "fps")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _int_list(text: str) -> list[int]:
    try:
        vals = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not vals or min(vals) < 1:
        raise argparse.ArgumentTypeError("intervals must be a nonempty list of integers >= 1")
    return vals


def _variant_list(text: str) -> list[str]:
    vals = [v.strip() for v in text.split(",") if v.strip()]
    bad = [v for v in vals if v not in VARIANTS]
    if not vals or bad:
        raise argparse.ArgumentTypeError(f"unknown variants {bad}; choose from {sorted(VARIANTS)}")
    return vals


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="tracker config, key=value per line")
    common.add_argument("--seed", type=int, help="override the scenario seed")
    common.add_argument("--jobs", type=int, default=1, help="parallel sweep cells")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="uavtrack", description="Simulate scenarios, track them, score results and run interval sweeps.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", parents=[common], help="generate a synthetic scenario directory")
    s.add_argument("spec", type=Path)
    s.add_argument("out_dir", type=Path)

    t = sub.add_parser("track", parents=[common], help="track a detection directory")
    t.add_argument("det_dir", type=Path)
    t.add_argument("out_file", type=Path)
    t.add_argument("--no-amc", action="store_true", help="drop the AMC term (motion term becomes IoU alone)")
    t.add_argument("--no-mtc", action="store_true", help="skip track continuation")
    t.add_argument("--no-app", action="store_true", help="zero the appearance cost")

    e = sub.add_parser("eval", parents=[common], help="score a result file against ground truth")
    e.add_argument("gt", type=Path)
    e.add_argument("results", type=Path)
    e.add_argument("--out", type=Path, help="also write key=value metrics here")

    w = sub.add_parser("sweep", parents=[common], help="frame-interval x variant grid")
    w.add_argument("scenario_dir", type=Path)
    w.add_argument("--out", type=Path, required=True, help="table file; a .csv is written next to it")
    w.add_argument("--intervals", type=_int_list, default=[1, 2, 3, 4, 5])
    w.add_argument("--variants", type=_variant_list, default=list(DEFAULT_VARIANTS))
    w.add_argument("--timing", action="store_true",
                   help="measure association-only FPS (makes the fps column run-dependent)")
    return p


def _tracker_config(path: Path | None) -> TrackerConfig:
    return TrackerConfig.load(path) if path else TrackerConfig()


def cmd_simulate(args) -> int:
    items = formats.read_manifest(args.spec)
    if args.seed is not None:
        items["seed"] = str(args.seed)
    spec = simgen.ScenarioSpec.from_mapping(items)
    bundle = simgen.generate(spec)
    simgen.write_bundle(bundle, args.out_dir)
    print(f"wrote {bundle.num_frames} frames to {args.out_dir}")
    return EXIT_OK


def cmd_track(args) -> int:
    cfg = _tracker_config(args.config)
    flags = {}
    if args.no_amc:
        flags["use_amc"] = False
    if args.no_mtc:
        flags["use_mtc"] = False
    if args.no_app:
        flags["use_app"] = False
    cfg = replace(cfg, **flags)
    scenario = formats.StoredScenario(args.det_dir)
    results, _ = run_bundle(scenario, cfg)
    formats.write_results(args.out_file, results)
    n = sum(len(r.outputs) for r in results)
    print(f"tracked {scenario.num_frames} frames, {n} boxes -> {args.out_file}")
    return EXIT_OK


def cmd_eval(args) -> int:
    gt = formats.rows_to_frames(formats.read_mot(args.gt))
    pred = formats.rows_to_frames(formats.read_mot(args.results))
    report = evaluate(gt, pred)
    sys.stdout.write(report.to_table())
    if args.out:
        args.out.write_text(report.to_key_values(), encoding="utf-8")
    return EXIT_OK


def _sweep_cell(root: str, variant: str, k: int, cfg: TrackerConfig, timing: bool) -> CellResult:
    try:
        scenario = formats.StoredScenario(root).subsample(k)
        results, secs = run_bundle(scenario, variant_config(variant, cfg))
        report = evaluate(scenario.gt_frames(), pred_frames(results))
        fps = scenario.num_frames / secs if timing and secs > 0 else None
        return CellResult(variant, k, report, fps)
    except Exception as exc:  # failed cells are reported, not fatal
        return CellResult(variant, k, None, error=f"{type(exc).__name__}: {exc}")


def _csv_row(c: CellResult) -> str:
    fps = f"{c.fps:.1f}" if c.fps is not None else "nan"
    if c.report is None:
        return ",".join([c.variant, str(c.k)] + ["nan"] * 7 + [fps])
    r = c.report
    return ",".join([c.variant, str(c.k), f"{r.idf1:.6f}", f"{r.mota:.6f}", str(r.ids), str(r.fp),
                     str(r.fn), str(r.mt), str(r.ml), fps])


def format_sweep_table(cells: list[CellResult]) -> str:
    head = f"{'variant':<10} {'k':>3} {'IDF1':>6} {'MOTA':>6} {'IDs':>5} {'FP':>6} {'FN':>6} {'MT':>4} {'ML':>4} {'FPS':>7}"
    lines = [head]
    for c in cells:
        fps = f"{c.fps:7.1f}" if c.fps is not None else f"{'-':>7}"
        if c.report is None:
            lines.append(f"{c.variant:<10} {c.k:>3} FAILED {c.error}")
            continue
        r = c.report
        lines.append(f"{c.variant:<10} {c.k:>3} {100 * r.idf1:6.1f} {100 * r.mota:6.1f} {r.ids:>5} "
                     f"{r.fp:>6} {r.fn:>6} {r.mt:>4} {r.ml:>4} {fps}")
    if any(c.fps is not None for c in cells):
        lines.append("FPS: association stage only (detections and feature maps are ingested)")
    return "\n".join(lines) + "\n"


def cmd_sweep(args) -> int:
    if not (args.scenario_dir / "manifest.txt").exists():
        raise FileNotFoundError(f"no scenario at {args.scenario_dir} (manifest.txt missing)")
    cfg = _tracker_config(args.config)
    grid = [(v, k) for v in args.variants for k in args.intervals]
    root = str(args.scenario_dir)
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            futures = [pool.submit(_sweep_cell, root, v, k, cfg, args.timing) for v, k in grid]
            cells = [f.result() for f in futures]
    else:
        cells = [_sweep_cell(root, v, k, cfg, args.timing) for v, k in grid]
    table = format_sweep_table(cells)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    args.out.write_text(table, encoding="utf-8")
    args.out.with_suffix(".csv").write_text(
        ",".join(CSV_COLUMNS) + "\n" + "".join(_csv_row(c) + "\n" for c in cells), encoding="utf-8")
    sys.stdout.write(table)
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "track": cmd_track, "eval": cmd_eval, "sweep": cmd_sweep}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.jobs < 1:
        print("uavtrack: error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, formats.FormatError, MetricsError, ValueError, OSError, RuntimeError) as exc:
        print(f"uavtrack {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
