"""
Command-line interface.

Exit codes: 0 success, 1 some entries failed, 2 fatal configuration or IO error.
"""

import argparse
import json
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from dotenv import load_dotenv
from rich.console import Console

from . import __version__
from .audio_io import load_audio
from .captions import compose_prompt, format_caption, parse_caption, record_for
from .config import DESCRIPTOR_KEYS, PipelineConfig, build_config, config_hash, load_config
from .descriptors import VOCABULARY, analyze
from .errors import AppError, io_error
from .pipeline import (
    REPORT_NAME,
    compare_reports,
    dataset_stats,
    evaluate_generated,
    load_manifest,
    load_output_manifest,
    load_pairs,
    run_pipeline,
)
from .progress import alignment_table, console, descriptor_table, histogram_table, setup_logging

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_FATAL = 2

stdout = Console()


def _config(args: argparse.Namespace, **overrides) -> PipelineConfig:
    if getattr(args, "config", None):
        return load_config(Path(args.config), **overrides)
    return build_config({k: v for k, v in overrides.items() if v is not None})


def _emit_json(data) -> None:
    sys.stdout.write(json.dumps(data, indent=2, ensure_ascii=False) + "\n")


def cmd_analyze(args: argparse.Namespace) -> int:
    cfg = _config(args)
    buf = load_audio(Path(args.wav))
    ds = analyze(buf, cfg.thresholds)
    result: Dict[str, object] = {"file": args.wav, "descriptors": ds.to_dict()}
    if args.caption:
        result["caption"] = format_caption(record_for(args.caption, ds))

    if args.json:
        _emit_json(result)
        return EXIT_OK
    stdout.print(descriptor_table(result["descriptors"], title=f"Descriptors: {Path(args.wav).name}"))
    if args.caption:
        stdout.print(f"[green]✓[/green] {result['caption']}")
    return EXIT_OK


def cmd_augment(args: argparse.Namespace) -> int:
    cfg = _config(args, global_seed=args.seed, workers=args.workers, output_dir=args.out)
    manifest = load_manifest(Path(args.manifest))
    out_dir = Path(args.out)

    console.print(f"[blue]Manifest:[/blue] {args.manifest} ({len(manifest)} entries)")
    console.print(f"[blue]Output:[/blue] {out_dir}")
    console.print(f"[blue]Config hash:[/blue] {config_hash(cfg)}  [blue]Workers:[/blue] {cfg.workers}")

    report = run_pipeline(manifest, cfg, out_dir, show_progress=not args.quiet)

    if report.failures:
        console.print(f"[yellow]⚠️  {report.failed} of {report.total} entries failed; "
                      f"see {out_dir / REPORT_NAME}[/yellow]")
    else:
        console.print(f"[green]✓ Augmented {report.succeeded} entries[/green]")
    return report.exit_code


def _parse_pairs_args(values: List[str]) -> Dict[str, Path]:
    named: Dict[str, Path] = {}
    for i, value in enumerate(values):
        name, sep, path = value.partition("=")
        if not sep:
            name, path = ("model" if len(values) == 1 else f"run{i + 1}"), value
        if name in named:
            raise AppError(f"pair set {name!r} given twice")
        named[name] = Path(path)
    return named


def cmd_eval(args: argparse.Namespace) -> int:
    cfg = _config(args)
    reports = {}
    for name, path in _parse_pairs_args(args.pairs).items():
        console.print(f"[blue]Evaluating {name}:[/blue] {path}")
        reports[name] = evaluate_generated(load_pairs(path), cfg.thresholds)

    comparison = compare_reports(reports)
    document = {"models": {name: r.to_dict() for name, r in reports.items()}, "comparison": comparison}
    if args.out:
        try:
            Path(args.out).write_text(json.dumps(document, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
        except OSError as e:
            raise io_error(str(args.out), "write_report", e)
        console.print(f"[green]✓ Report saved to: {args.out}[/green]")

    stdout.print(alignment_table(comparison, list(reports)))
    for name, r in reports.items():
        if r.duration_abs_error_mean is not None:
            stdout.print(f"[dim]{name}: mean |prompted - measured| duration "
                         f"{r.duration_abs_error_mean:.3f}s, {r.skipped} prompt(s) without descriptors[/dim]")
    return EXIT_OK


def cmd_stats(args: argparse.Namespace) -> int:
    stats = dataset_stats(load_output_manifest(Path(args.manifest)))
    if args.json:
        _emit_json(stats)
        return EXIT_OK
    stdout.print(f"[blue]Entries:[/blue] {stats['entries']}")
    stdout.print(histogram_table(stats["histograms"]))
    for key, summary in stats["values"].items():
        stdout.print(f"  {key}: min {summary['min']:.2f}  median {summary['median']:.2f}  "
                     f"max {summary['max']:.2f}  (n={summary['count']})")
    if stats["caption_length"]:
        length = stats["caption_length"]
        stdout.print(f"  caption length: min {length['min']:.0f}  median {length['median']:.0f}  "
                     f"max {length['max']:.0f}")
    return EXIT_OK


def cmd_caption(args: argparse.Namespace) -> int:
    if args.parse:
        _emit_json(parse_caption(args.text).to_dict())
        return EXIT_OK
    requested = {key: getattr(args, key) for key in DESCRIPTOR_KEYS}
    sys.stdout.write(compose_prompt(args.text, **requested) + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="descaug",
        description="Measure acoustic descriptors, augment audio and append descriptors to captions",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Show the descriptors of one clip
  python -m descaug analyze clip.wav

  # Augment a dataset with 8 workers
  python -m descaug augment --manifest data.jsonl --out out/ --seed 7 --workers 8

  # Compare a baseline against a descriptor-trained model
  python -m descaug eval --pairs baseline=base.jsonl --pairs augmented=aug.jsonl --out eval.json

  # Build an inference prompt
  python -m descaug caption "A dog barks" --reverb "very wet" --duration 5
        """
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="Debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="Measure and classify the descriptors of one WAV file")
    p.add_argument("wav", help="Input WAV file")
    p.add_argument("--json", action="store_true", help="Print JSON instead of a table")
    p.add_argument("--caption", help="Coarse caption to augment with every measured descriptor")
    p.add_argument("--config", help="PipelineConfig JSON file")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("augment", help="Run the augmentation pipeline over a JSONL manifest")
    p.add_argument("--manifest", required=True, help="Input manifest (JSONL)")
    p.add_argument("--out", required=True, help="Output directory")
    p.add_argument("--config", help="PipelineConfig JSON file")
    p.add_argument("--seed", type=int, help="Global seed (default: config, then $DESCAUG_SEED, then 0)")
    p.add_argument("--workers", type=int, help="Worker processes (default: config, then $DESCAUG_WORKERS, then 1)")
    p.add_argument("-q", "--quiet", action="store_true", help="No progress bar")
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("eval", help="Measure generated audio against its prompts")
    p.add_argument("--pairs", action="append", required=True, metavar="[NAME=]PATH",
                   help="JSONL of {prompt, audio_path}; repeat with names to compare runs")
    p.add_argument("--out", help="Write the report as JSON")
    p.add_argument("--config", help="PipelineConfig JSON file")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("stats", help="Summarize an output manifest")
    p.add_argument("--manifest", required=True, help="Output manifest (JSONL)")
    p.add_argument("--json", action="store_true", help="Print JSON instead of tables")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("caption", help="Compose or parse a descriptor caption")
    p.add_argument("text", help="Coarse caption, or a full caption with --parse")
    p.add_argument("--parse", action="store_true", help="Parse TEXT and print the record as JSON")
    for key, vocab in VOCABULARY.items():
        p.add_argument(f"--{key}", help=f"One of: {', '.join(vocab.surfaces())}")
    p.add_argument("--duration", type=float, help="Duration in seconds")
    p.set_defaults(func=cmd_caption)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main CLI function."""
    load_dotenv()
    args = build_parser().parse_args(argv)
    setup_logging(args.verbose)
    try:
        return args.func(args)
    except AppError as e:
        console.print(f"[red]✗ {e}[/red]")
        return EXIT_FATAL
    except KeyboardInterrupt:
        console.print("[yellow]Interrupted[/yellow]")
        return EXIT_FATAL


if __name__ == "__main__":
    sys.exit(main())
