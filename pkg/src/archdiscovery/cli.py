"""Command-line entry point.

Subcommands: discover (run the search), validate (check one architecture
document), score (score a stored metrics record), replay (verify a
trajectory), preset (print a bundled criteria preset).  Exit codes: 0 ok,
1 domain error, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import config as config_mod
from . import ir, loop, scoring
from .loop import BackendFatal, ConfigError, DivergenceDetected, SchemaMismatch
from .metrics import MetricsRecord, UnknownPreset, load_preset

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_USAGE = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="archdiscovery",
        description="LLM-driven neural architecture discovery",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_discover = sub.add_parser("discover", help="run a discovery loop")
    p_discover.add_argument("--config", type=Path, help="TOML or JSON config file")
    p_discover.add_argument("--backend", choices=["http_chat", "scripted"])
    p_discover.add_argument("--script", help="scripted backend: response dir or JSONL")
    p_discover.add_argument("--preset", type=int, help="criteria preset 1-5")
    p_discover.add_argument("--max-iterations", type=int, dest="max_iterations")
    p_discover.add_argument("--temperature", type=float)
    p_discover.add_argument("--out", type=Path, help="output directory for run files")
    p_discover.add_argument("--seed", type=int)
    p_discover.add_argument("--run-id", dest="run_id", help="fixed run id (default: generated)")

    p_validate = sub.add_parser("validate", help="validate one architecture document")
    p_validate.add_argument("arch", type=Path)

    p_score = sub.add_parser("score", help="score a metrics JSON file")
    p_score.add_argument("metrics", type=Path)
    p_score.add_argument("--config", type=Path)
    p_score.add_argument("--preset", type=int)

    p_replay = sub.add_parser("replay", help="recompute and verify a trajectory")
    p_replay.add_argument("trajectory", type=Path)

    p_preset = sub.add_parser("preset", help="print a bundled criteria preset")
    p_preset.add_argument("number", type=int)
    p_preset.add_argument("--format", choices=["toml", "json"], default="toml")

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    handler = {
        "discover": cmd_discover,
        "validate": cmd_validate,
        "score": cmd_score,
        "replay": cmd_replay,
        "preset": cmd_preset,
    }[args.command]
    try:
        return handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BackendFatal as exc:
        print(f"backend failure: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


def _merge_overrides(raw: dict, args: argparse.Namespace) -> dict:
    backend = dict(raw.get("backend", {}))
    if args.backend:
        backend["kind"] = args.backend
    if args.script:
        backend["kind"] = backend.get("kind", "scripted")
        backend["script"] = args.script
    if args.temperature is not None:
        backend["temperature"] = args.temperature
    if backend:
        raw["backend"] = backend

    loop_section = dict(raw.get("loop", {}))
    if args.max_iterations is not None:
        loop_section["max_iterations"] = args.max_iterations
    if args.seed is not None:
        loop_section["seed"] = args.seed
    if args.out is not None:
        loop_section["out_dir"] = str(args.out)
    if args.run_id is not None:
        loop_section["run_id"] = args.run_id
    if loop_section:
        raw["loop"] = loop_section
    return raw


def cmd_discover(args: argparse.Namespace) -> int:
    raw = config_mod.read_config_file(args.config) if args.config else {}
    raw = _merge_overrides(raw, args)
    cfg, task, snapshot = config_mod.build_setup(raw, preset=args.preset)

    def _print_line(record: loop.IterationRecord) -> None:
        if record.valid:
            e = record.eval
            s = record.score
            print(
                f"iter {record.index:>3}  valid  "
                f"a1={e.a1:.4f} a2={e.a2:.4f} fps={e.fps:>10.1f} "
                f"e1={e.e1_kwh:.4g} cm={s.cm:+.4f}"
                + ("  *best*" if record.best else "")
            )
        else:
            print(f"iter {record.index:>3}  INVALID  {record.error_type}")

    trajectory = loop.run_discovery(cfg, task, config_snapshot=snapshot,
                                    on_iteration=_print_line)

    totals = trajectory.totals
    print()
    print(f"trajectory: {trajectory.path}")
    if trajectory.best_score is None:
        print("no valid candidate found")
        return EXIT_DOMAIN
    best = next(r for r in trajectory.records if r.index == trajectory.best_index)
    print(
        "best model:  "
        f"iteration={trajectory.best_index}  "
        f"accuracy={best.eval.a2:.4f}  params={best.eval.params}  "
        f"hours={totals['hours']:.4f}  kwh_pue={totals['kwh_pue']:.4f}  "
        f"co2_lbs={totals['co2_lbs']:.4f}  fps={best.eval.fps:.1f}"
    )
    print(f"best model file: {cfg.out_dir / (trajectory.run_id + '.best.arch.json')}")
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    if not args.arch.exists():
        print(f"no such file: {args.arch}", file=sys.stderr)
        return EXIT_USAGE
    text = args.arch.read_text(encoding="utf-8")
    try:
        graph = ir.parse_arch(text)
    except ir.MalformedDocument as exc:
        print(f"MalformedDocument: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ir.ArchError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    try:
        report = ir.infer_shapes(graph)
    except ir.ArchError as exc:
        where = f" at layer {exc.layer_id!r}" if exc.layer_id else ""
        print(f"{type(exc).__name__}{where}: {exc}", file=sys.stderr)
        return EXIT_DOMAIN

    print(f"{'layer':<20} {'kind':<18} {'output shape':<16} params")
    for spec in ir.topological_order(graph):
        shape = "x".join(str(d) for d in report.shapes[spec.id])
        print(f"{spec.id:<20} {spec.kind:<18} {shape:<16} {report.params[spec.id]}")
    print(f"params: {report.total_params}")
    print(f"flops:  {report.total_flops}")
    return EXIT_OK


def cmd_score(args: argparse.Namespace) -> int:
    if not args.metrics.exists():
        print(f"no such file: {args.metrics}", file=sys.stderr)
        return EXIT_USAGE
    try:
        obj = json.loads(args.metrics.read_text(encoding="utf-8"))
        record = MetricsRecord(
            a1=float(obj["a1"]), a2=float(obj["a2"]),
            e1_kwh=float(obj["e1_kwh"]), e2_kwh=float(obj["e2_kwh"]),
            fps=float(obj["fps"]), params=int(obj["params"]),
        )
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        print(f"bad metrics file: {exc}", file=sys.stderr)
        return EXIT_DOMAIN

    raw = config_mod.read_config_file(args.config) if args.config else {}
    criteria, weights = config_mod.criteria_and_weights(raw, preset=args.preset)
    report = scoring.combined_effectiveness(record, criteria, weights)
    print(f"cm    = {report.cm:.6f}")
    print(f"  ta   = {report.ta:.6f}  va   = {report.va:.6f}  (aw={report.aw})")
    print(f"  nf   = {report.nf:.6f}  (fw={report.fw})")
    print(f"  t_ne = {report.t_ne:.6f}  v_ne = {report.v_ne:.6f}  (ew={report.ew})")
    return EXIT_OK


def cmd_replay(args: argparse.Namespace) -> int:
    if not args.trajectory.exists():
        print(f"no such file: {args.trajectory}", file=sys.stderr)
        return EXIT_USAGE
    try:
        trajectory = loop.replay(args.trajectory)
    except SchemaMismatch as exc:
        print(f"SchemaMismatch: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DivergenceDetected as exc:
        print(f"DivergenceDetected: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    n_valid = sum(1 for r in trajectory.records if r.valid)
    print(
        f"replayed {len(trajectory.records)} iterations "
        f"({n_valid} valid), zero divergences"
    )
    if trajectory.best_score is not None:
        print(f"best: iteration {trajectory.best_index}, cm={trajectory.best_score.cm:.6f}")
    return EXIT_OK


def cmd_preset(args: argparse.Namespace) -> int:
    try:
        criteria = load_preset(args.number)
    except UnknownPreset as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    items = config_mod.criteria_to_dict(criteria)
    if args.format == "json":
        print(json.dumps({"criteria": items}, indent=2))
    else:
        print("[criteria]")
        for key, value in items.items():
            print(f"{key} = {value}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
