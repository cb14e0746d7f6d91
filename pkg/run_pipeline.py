#!/usr/bin/env python3
"""
Run the desk-scale experiment pipeline end-to-end.

Usage:
    python run_pipeline.py [--out runs] [--seeds 7,13,29] [--quick]

Example:
    python run_pipeline.py --out runs --quick
"""

import argparse
import subprocess
import sys
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

from src.core.presets import PUBLISHED_COUNTS

Step = Tuple[str, List[str]]

PUBLISHED_PRESETS = tuple(PUBLISHED_COUNTS)


def run_command(cmd: Sequence[str], description: str, cwd: Optional[Path] = None) -> None:
    """Run one step, stopping the pipeline on failure."""
    print(f"\n{'='*70}")
    print(f"  {description}")
    print(f"{'='*70}")
    print(f"Command: {' '.join(cmd)}")
    print()

    result = subprocess.run(list(cmd), cwd=cwd, text=True)

    if result.returncode != 0:
        print(f"\n✗ Error: {description} failed with exit code {result.returncode}")
        sys.exit(result.returncode)

    print(f"\n✓ {description} completed successfully")


def pipeline_steps(out_dir: Path, seeds: Sequence[int], quick: bool = False) -> List[Step]:
    """
    Build the ordered list of CLI invocations.

    Args:
        out_dir: Root directory for every artifact directory
        seeds: Training seeds for the local-parity comparison
        quick: Fewer epochs, smaller datasets and shorter benchmarks

    Returns:
        (description, argv) pairs
    """
    cli = [sys.executable, "-m", "src.main"]
    epochs = ["--epochs", "3" if quick else "40"]
    sizes = ["--n-train", "200", "--n-test", "100"] if quick else []
    steps: List[Step] = []

    for preset in PUBLISHED_PRESETS:
        steps.append((f"Counting attention parameters: {preset}", cli + ["count-params", "--preset", preset]))

    data_dir = out_dir / "data"
    steps.append((
        "Generating local-parity corpus",
        cli + ["gen-data", "--task", "local_parity", "--T", "16", "--n", "200", "--out", str(data_dir)],
    ))

    for preset in ("tiny_baseline", "tiny_band2"):
        for seed in seeds:
            steps.append((
                f"Training {preset} on local_parity (seed {seed})",
                cli + ["train", "--task", "local_parity", "--preset", preset, "--seed", str(seed),
                       "--out", str(out_dir / f"{preset}_s{seed}")] + epochs + sizes,
            ))

    steps.append((
        "Training negative control (1 layer, band 1) on first_token_broadcast",
        cli + ["train", "--task", "first_token_broadcast", "--preset", "tiny_band1_l1", "--seq-len", "8",
               "--vocab", "4", "--out", str(out_dir / "negative_control")] + epochs + sizes,
    ))

    checkpoint = out_dir / f"tiny_band2_s{seeds[0]}" / "checkpoint.npz"
    steps.append((
        "Analyzing sensitivity and attention bias",
        cli + ["analyze", "--checkpoint", str(checkpoint), "--corpus", str(data_dir / "data.jsonl"),
               "--which", "both", "--preset", "tiny_band2", "--out", str(out_dir / "analysis")]
        + (["--max-sentences", "20"] if quick else []),
    ))

    bench = ["--T", "128,512", "--reps", "3"] if quick else ["--reps", "5"]
    steps.append(("Benchmarking dense vs banded attention", cli + ["bench", "--out", str(out_dir / "bench")] + bench))
    return steps


def main():
    """Main execution function."""
    parser = argparse.ArgumentParser(description="Run the desk-scale experiment pipeline")
    parser.add_argument("--out", type=Path, default=Path("runs"))
    parser.add_argument("--seeds", default="7,13,29")
    parser.add_argument("--quick", action="store_true", help="Smoke-test sizes")
    args = parser.parse_args()

    print("="*70)
    print("  LOCAL ATTENTION PIPELINE")
    print("="*70)

    project_root = Path(__file__).parent
    seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    steps = pipeline_steps(args.out.resolve(), seeds, args.quick)
    for n, (description, cmd) in enumerate(steps, start=1):
        run_command(cmd, f"Step {n}/{len(steps)}: {description}", cwd=project_root)

    print(f"\n{'='*70}")
    print("  PIPELINE COMPLETED SUCCESSFULLY")
    print(f"{'='*70}")
    print(f"\nArtifacts: {args.out.resolve()}")
    print()


if __name__ == "__main__":
    main()
