"""
Main application entry point for the local-attention laboratory

Usage:
    python -m src.main count-params --preset baseline
    python -m src.main train --task local_parity --preset tiny_band2 --out runs/band2
    python -m src.main analyze --checkpoint runs/band2/checkpoint.npz --corpus corpus.jsonl --out runs/analysis
    python -m src.main bench --out runs/bench
    python -m src.main gen-data --task local_parity --out runs/data
"""
import argparse
import asyncio
import json
import sys
from pathlib import Path
from typing import List, Optional, Sequence

from config.settings import settings

# BLAS reads its thread caps when numpy first loads
settings.apply_thread_limits()

from pydantic import ValidationError  # noqa: E402
from rich.console import Console  # noqa: E402
from rich.table import Table  # noqa: E402

from src import __version__  # noqa: E402
from src.core.attention import count_attention_params, rounded_millions  # noqa: E402
from src.core.config_files import load_model_config  # noqa: E402
from src.core.presets import preset_names, resolve_preset  # noqa: E402
from src.models.schemas import ModelConfig, TaskSpec, TrainHyper, make_model_config  # noqa: E402
from src.services import AnalysisService, BenchService, DataService, TrainingService  # noqa: E402
from src.utils.errors import (  # noqa: E402
    ArtifactError,
    ConfigError,
    ContractError,
    CorpusError,
    DivergenceError,
)
from src.utils.logger import logger  # noqa: E402

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2
EXIT_ARTIFACT = 3

TASKS = ("local_parity", "copy", "first_token_broadcast")

# stdout carries the machine-readable output
console = Console(stderr=True)


def _ints(text: str) -> List[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _add_model_args(parser: argparse.ArgumentParser, required: bool) -> None:
    group = parser.add_mutually_exclusive_group(required=required)
    group.add_argument("--preset", help=f"Named configuration ({len(preset_names())} available)")
    group.add_argument("--config", type=Path, help="JSON or key-value model config file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="locattn",
        description="Local attention masks and weight tying in transformer encoders",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    count = sub.add_parser("count-params", help="Count attention parameters of a configuration")
    group = count.add_mutually_exclusive_group(required=True)
    group.add_argument("--preset")
    group.add_argument("--config", type=Path)
    group.add_argument("--all", action="store_true", help="Every preset")

    train = sub.add_parser("train", help="Train a token classifier on a synthetic task")
    train.add_argument("--task", choices=TASKS, required=True)
    _add_model_args(train, required=True)
    train.add_argument("--mask-mode", choices=("after_softmax", "in_softmax"))
    train.add_argument("--d-v", type=int)
    train.add_argument("--d-l", type=int)
    train.add_argument("--d-ff", type=int)
    train.add_argument("--seq-len", type=int, default=16)
    train.add_argument("--vocab", type=int, default=2)
    train.add_argument("--n-train", type=int, default=2000)
    train.add_argument("--n-test", type=int, default=500)
    train.add_argument("--data-seed", type=int, default=settings.seed, help="Dataset seed")
    train.add_argument("--epochs", type=int, default=40)
    train.add_argument("--lr", type=float, default=3e-3)
    train.add_argument("--batch-size", type=int, default=32)
    train.add_argument("--seed", type=int, default=settings.seed)
    train.add_argument("--progress", action="store_true", help="Show a progress bar")
    train.add_argument("--out", type=Path, required=True)

    analyze = sub.add_parser("analyze", help="Sensitivity and attention-bias analysis of a checkpoint")
    analyze.add_argument("--checkpoint", type=Path, required=True)
    analyze.add_argument("--corpus", type=Path, required=True)
    analyze.add_argument("--which", choices=("sensitivity", "bias", "both"), default="both")
    _add_model_args(analyze, required=False)
    analyze.add_argument("--max-sentences", type=int)
    analyze.add_argument("--raw-alpha", action="store_true", help="Score raw alpha instead of the masked weights")
    analyze.add_argument("--point", choices=("attention", "residual"), default="attention")
    analyze.add_argument("--window", type=int, default=2)
    analyze.add_argument("--exclude-self", action="store_true", help="Leave token i out of its own local subset")
    analyze.add_argument("--threads", type=int, default=settings.threads)
    analyze.add_argument("--seed", type=int, default=settings.seed)
    analyze.add_argument("--out", type=Path, required=True)

    bench = sub.add_parser("bench", help="Time dense masked attention against the banded kernel")
    bench.add_argument("--T", dest="seq_lens", type=_ints, default=[128, 512, 2048])
    bench.add_argument("--k", dest="ks", type=_ints, default=[1, 2, 6])
    bench.add_argument("--reps", type=int, default=5)
    bench.add_argument("--d-v", type=int, default=64)
    bench.add_argument("--d-l", type=int, default=64)
    bench.add_argument("--seed", type=int, default=settings.seed)
    bench.add_argument("--out", type=Path, required=True)

    gen = sub.add_parser("gen-data", help="Write a synthetic dataset as JSON Lines")
    gen.add_argument("--task", choices=TASKS, required=True)
    gen.add_argument("--T", dest="seq_len", type=int, default=16)
    gen.add_argument("--n", type=int, default=2000)
    gen.add_argument("--n-test", type=int, default=0)
    gen.add_argument("--vocab", type=int, default=2)
    gen.add_argument("--seed", type=int, default=settings.seed)
    gen.add_argument("--out", type=Path, required=True)
    return parser


def model_config(args: argparse.Namespace) -> Optional[ModelConfig]:
    """Resolve --preset / --config plus width and mask-mode overrides"""
    overrides = {
        key: getattr(args, key, None)
        for key in ("d_v", "d_l", "d_ff", "mask_mode")
        if getattr(args, key, None) is not None
    }
    if args.preset:
        return resolve_preset(args.preset, **overrides)
    if args.config:
        cfg = load_model_config(args.config)
        if overrides:
            cfg = make_model_config(**{**cfg.model_dump(), **overrides})
        return cfg
    return None


def count_record(name: str, cfg: ModelConfig) -> dict:
    n = count_attention_params(cfg)
    return {"preset": name, "attention_params": n, "paper_rounded": rounded_millions(n)}


def cmd_count_params(args: argparse.Namespace) -> int:
    if args.all:
        records = [count_record(name, resolve_preset(name)) for name in preset_names()]
        table = Table(title="Attention parameters")
        table.add_column("Preset", style="cyan")
        table.add_column("Params", justify="right")
        table.add_column("Rounded", justify="right", style="green")
        for r in records:
            table.add_row(r["preset"], f"{r['attention_params']:,}", r["paper_rounded"])
        console.print(table)
        print(json.dumps(records, indent=4))
        return EXIT_OK
    cfg = model_config(args)
    name = args.preset or cfg.preset or args.config.stem
    print(json.dumps(count_record(name, cfg)))
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    cfg = model_config(args)
    task = TaskSpec(
        kind=args.task,
        seq_len=args.seq_len,
        vocab_size=args.vocab,
        n_train=args.n_train,
        n_test=args.n_test,
        seed=args.data_seed,
    )
    hyper = TrainHyper(lr=args.lr, epochs=args.epochs, batch_size=args.batch_size)
    result = TrainingService().run(task, cfg, hyper, args.seed, args.out, progress=args.progress or None)

    table = Table(title=f"Training results ({cfg.preset or 'custom'}, seed {args.seed})")
    table.add_column("Metric", style="cyan")
    table.add_column("Value", style="green")
    table.add_row("Epochs", str(len(result.metrics)))
    table.add_row("Final train acc", f"{result.metrics[-1].train_acc:.4f}")
    table.add_row("Final test acc", f"{result.final_test_acc:.4f}")
    table.add_row("Checkpoint", str(result.checkpoint_path))
    console.print(table)
    return EXIT_OK


def cmd_analyze(args: argparse.Namespace) -> int:
    expected = model_config(args)
    service = AnalysisService(threads=args.threads)
    manifest = asyncio.run(
        service.run(
            checkpoint=args.checkpoint,
            corpus_path=args.corpus,
            which=args.which,
            out_dir=args.out,
            expected=expected,
            max_sentences=args.max_sentences,
            use_masked=not args.raw_alpha,
            point=args.point,
            window=args.window,
            include_self=not args.exclude_self,
            seed=args.seed,
        )
    )
    console.print(f"[bold green]Wrote {', '.join(manifest.outputs.values()) or 'no reports'} to {args.out}[/bold green]")
    return EXIT_OK


def cmd_bench(args: argparse.Namespace) -> int:
    rows = BenchService().run(
        args.out, seq_lens=args.seq_lens, ks=args.ks, reps=args.reps,
        d_v=args.d_v, d_l=args.d_l, seed=args.seed,
    )
    table = Table(title=f"Dense vs banded attention (median of {args.reps})")
    for column in ("T", "k", "dense ms", "banded ms", "speedup", "max deviation"):
        table.add_column(column, justify="right")
    for r in rows:
        table.add_row(
            str(r.seq_len), str(r.k),
            f"{r.dense_median_s * 1e3:.3f}", f"{r.banded_median_s * 1e3:.3f}",
            f"{r.speedup:.2f}x", f"{r.max_deviation:.2e}",
        )
    console.print(table)
    return EXIT_OK


def cmd_gen_data(args: argparse.Namespace) -> int:
    task = TaskSpec(
        kind=args.task,
        seq_len=args.seq_len,
        vocab_size=args.vocab,
        n_train=args.n,
        n_test=args.n_test,
        seed=args.seed,
    )
    path = DataService().generate(task, args.out)
    console.print(f"[bold green]Wrote {path}[/bold green]")
    return EXIT_OK


COMMANDS = {
    "count-params": cmd_count_params,
    "train": cmd_train,
    "analyze": cmd_analyze,
    "bench": cmd_bench,
    "gen-data": cmd_gen_data,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Run one command

    Args:
        argv: Arguments without the program name (default: sys.argv[1:])

    Returns:
        Exit code: 0 success, 1 divergence or unexpected failure,
        2 usage or configuration error, 3 incompatible artifact
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    try:
        return COMMANDS[args.command](args)
    except (ConfigError, ContractError, CorpusError, ValidationError) as e:
        console.print(f"[bold red]Error:[/bold red] {e}")
        logger.error(f"{args.command}: {e}")
        return EXIT_USAGE
    except ArtifactError as e:
        console.print(f"[bold red]Incompatible artifact:[/bold red] {e}")
        logger.error(f"{args.command}: {e}")
        return EXIT_ARTIFACT
    except DivergenceError as e:
        console.print(f"[bold red]Training diverged:[/bold red] {e}")
        return EXIT_FAILED
    except KeyboardInterrupt:
        console.print("\n[yellow]Cancelled by user[/yellow]")
        return EXIT_FAILED
    except Exception as e:
        console.print(f"\n[bold red]Fatal error:[/bold red] {str(e)}")
        logger.error("Fatal error", exc_info=True)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
