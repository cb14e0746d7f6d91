"""
Benchmark service: dense masked attention against the banded kernel
"""
import time
from pathlib import Path
from typing import Callable, List, Optional, Sequence

import numpy as np

from config.settings import settings
from src import __version__
from src.core.attention import HeadParams, band_to_dense, banded_attention, head_attention, renormalize_rows
from src.core.masks import MaskKind, make_mask
from src.core.tensor import glorot_scale, make_rng, seeded_uniform_init
from src.models.schemas import BenchRow, RunManifest
from src.utils.errors import ContractError
from src.utils.io import finish_manifest, write_csv, write_manifest
from src.utils.logger import logger

MIN_REPS = 3
BENCH_FIELDS = tuple(BenchRow.model_fields)


def median_time(fn: Callable[[], object], reps: int) -> float:
    """Median wall-clock seconds of ``reps`` calls"""
    times = []
    for _ in range(reps):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return float(np.median(times))


class BenchService:
    """Service for timing dense and banded local attention"""

    def __init__(self):
        """Initialize bench service"""
        logger.info("Bench service initialized")

    @staticmethod
    def random_head(d_v: int, d_l: int, rng) -> HeadParams:
        scale = glorot_scale(d_v, d_l)
        return HeadParams(
            w_q=seeded_uniform_init(d_v, d_l, scale, rng),
            w_k=seeded_uniform_init(d_v, d_l, scale, rng),
            w_v=seeded_uniform_init(d_v, d_l, scale, rng),
        )

    def measure(self, x: np.ndarray, p: HeadParams, k: int, d_l: int, reps: int) -> BenchRow:
        """
        Time both paths for one (T, k) pair and compare their outputs

        The dense path multiplies the band mask after the full softmax, so its
        rows are renormalized before comparing weights and the context is
        recomputed from the renormalized weights.

        Args:
            x: T x d_v input
            p: Head projections
            k: Band half-width
            d_l: Head width
            reps: Timed repetitions per path

        Returns:
            BenchRow
        """
        size, d_v = x.shape
        mask = make_mask(MaskKind("band", k), size)

        dense_s = median_time(lambda: head_attention(x, p, mask, d_l), reps)
        banded_s = median_time(lambda: banded_attention(x, p, k, d_l), reps)

        _, record = head_attention(x, p, mask, d_l)
        aligned = renormalize_rows(record.alpha_tilde)
        banded_ctx, alpha_band = banded_attention(x, p, k, d_l)
        weight_dev = float(np.max(np.abs(aligned - band_to_dense(alpha_band, k))))
        context_dev = float(np.max(np.abs(aligned @ (x @ p.w_v) - banded_ctx)))

        row = BenchRow(
            seq_len=size,
            k=k,
            d_v=d_v,
            d_l=d_l,
            reps=reps,
            dense_median_s=dense_s,
            banded_median_s=banded_s,
            speedup=dense_s / banded_s if banded_s > 0 else float("inf"),
            max_deviation=max(weight_dev, context_dev),
        )
        logger.info(
            f"T={size} k={k}: dense {dense_s * 1e3:.3f} ms, banded {banded_s * 1e3:.3f} ms, "
            f"speedup {row.speedup:.2f}x, deviation {row.max_deviation:.2e}"
        )
        return row

    def run(
        self,
        out_dir: Path,
        seq_lens: Sequence[int] = (128, 512, 2048),
        ks: Sequence[int] = (1, 2, 6),
        reps: int = 5,
        d_v: int = 64,
        d_l: int = 64,
        seed: Optional[int] = None,
    ) -> List[BenchRow]:
        """
        Benchmark every (T, k) pair and write bench.csv plus the manifest

        Args:
            out_dir: Artifact directory
            seq_lens: Sequence lengths
            ks: Band half-widths
            reps: Repetitions per measurement, at least 3
            d_v: Model width
            d_l: Head width
            seed: Input and weight seed

        Returns:
            One BenchRow per (T, k)
        """
        if reps < MIN_REPS:
            raise ContractError(f"bench needs at least {MIN_REPS} reps for a median, got {reps}")
        if any(k < 1 for k in ks):
            raise ContractError("band widths must be >= 1")
        out_dir = Path(out_dir)
        seed = settings.seed if seed is None else seed
        manifest = RunManifest(
            command="bench",
            tool_version=__version__,
            seed=seed,
            inputs={
                "seq_lens": list(seq_lens),
                "ks": list(ks),
                "reps": reps,
                "d_v": d_v,
                "d_l": d_l,
                "blas_threads": settings.blas_threads,
            },
        )
        write_manifest(out_dir, manifest)

        rng = make_rng(seed)
        p = self.random_head(d_v, d_l, rng)
        rows = []
        for size in seq_lens:
            x = rng.standard_normal((size, d_v))
            for k in ks:
                rows.append(self.measure(x, p, k, d_l, reps))

        write_csv(out_dir / "bench.csv", BENCH_FIELDS, (r.model_dump() for r in rows))
        manifest.outputs["bench"] = "bench.csv"
        finish_manifest(out_dir, manifest, "complete")
        return rows
