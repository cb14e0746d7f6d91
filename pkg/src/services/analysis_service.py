"""
Analysis service: sensitivity (gamma) and attention-bias reports for a
trained checkpoint over a dependency-annotated corpus
"""
import asyncio
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, TypeVar

import numpy as np

from config.settings import settings
from src import __version__
from src.analysis.bias import (
    HEADMAP_THRESHOLD,
    bias_report,
    combine_sentence_scores,
    sentence_bias_scores,
)
from src.analysis.corpus import load_corpus, sample_sentences, token_ids
from src.analysis.sensitivity import average_reports, sentence_sensitivity
from src.core.encoder import encode
from src.models.schemas import BiasReport, ModelConfig, RunManifest, SensitivityReport, SentenceRecord
from src.training.checkpoint import check_compatible, load_checkpoint
from src.training.model import TokenClassifier
from src.utils.io import finish_manifest, write_csv, write_json, write_manifest
from src.utils.logger import logger

SENSITIVITY_CAP = 100
BIAS_CAP = 1000
GAMMA_FIELDS = ("layer", "gamma_local", "gamma_syntactic", "gamma_unrelated", "n_sentences")

Item = TypeVar("Item")
Out = TypeVar("Out")


class AnalysisService:
    """Service for sensitivity and bias analyses"""

    def __init__(self, threads: Optional[int] = None):
        """
        Initialize analysis service

        Args:
            threads: Sentences analysed concurrently (default from settings)
        """
        self.threads = max(1, threads if threads is not None else settings.threads)
        logger.info(f"Analysis service initialized ({self.threads} worker thread(s))")

    async def map_sentences(self, fn: Callable[[Item], Out], items: Sequence[Item]) -> List[Out]:
        """
        Apply ``fn`` to every item on worker threads, at most ``self.threads``
        at a time; results keep the input order

        Args:
            fn: Pure per-sentence function
            items: Inputs

        Returns:
            Outputs in input order
        """
        semaphore = asyncio.Semaphore(self.threads)

        async def run_one(item: Item) -> Out:
            async with semaphore:
                return await asyncio.to_thread(fn, item)

        logger.info(f"Processing {len(items)} sentences concurrently...")
        return list(await asyncio.gather(*(run_one(item) for item in items)))

    @staticmethod
    def embed_sentence(model: TokenClassifier, record: SentenceRecord) -> np.ndarray:
        return model.embed(token_ids(record.tokens, model.vocab_size))

    async def sensitivity(
        self,
        model: TokenClassifier,
        sentences: Sequence[SentenceRecord],
        point: str = "attention",
        window: int = 2,
    ) -> Tuple[List[SensitivityReport], List[List[SensitivityReport]]]:
        """
        Gammas per sentence and their corpus average, for every layer

        Returns:
            (one averaged report per layer, per-sentence reports)
        """
        layers = list(range(model.config.n_layers))

        def one(record: SentenceRecord) -> List[SensitivityReport]:
            return sentence_sensitivity(
                model.encoder, self.embed_sentence(model, record), record.edges, layers, point, window
            )

        per_sentence = await self.map_sentences(one, sentences)
        return average_reports(per_sentence, layers), per_sentence

    async def bias(
        self,
        model: TokenClassifier,
        sentences: Sequence[SentenceRecord],
        use_masked: bool = True,
        include_self: bool = True,
        window: int = 2,
    ) -> BiasReport:
        """Locality and syntactic scores of every head, curves and head map"""
        cfg = model.config

        def one(record: SentenceRecord) -> Tuple[np.ndarray, np.ndarray]:
            records = encode(self.embed_sentence(model, record), model.encoder).records
            args = (records, cfg.n_layers, cfg.heads, len(record.tokens), record.edges)
            return (
                sentence_bias_scores(*args, "locality", use_masked, include_self, window),
                sentence_bias_scores(*args, "syntactic", use_masked, include_self, window),
            )

        pairs = await self.map_sentences(one, sentences)
        locality = combine_sentence_scores([p[0] for p in pairs])
        syntactic = combine_sentence_scores([p[1] for p in pairs])
        return bias_report(locality, syntactic, len(sentences), use_masked)

    def save_sensitivity(
        self,
        out_dir: Path,
        averaged: List[SensitivityReport],
        per_sentence: List[List[SensitivityReport]],
    ) -> Dict[str, str]:
        write_csv(out_dir / "gamma.csv", GAMMA_FIELDS, (r.model_dump() for r in averaged))
        rows = [
            {"sentence": s, **r.model_dump(exclude={"beta", "n_sentences"})}
            for s, reports in enumerate(per_sentence)
            for r in reports
        ]
        write_csv(
            out_dir / "gamma_sentences.csv",
            ("sentence", "layer", "gamma_local", "gamma_syntactic", "gamma_unrelated"),
            rows,
        )
        return {"gamma": "gamma.csv", "gamma_sentences": "gamma_sentences.csv"}

    def save_bias(self, out_dir: Path, report: BiasReport) -> Dict[str, str]:
        write_csv(
            out_dir / "bias.csv",
            ("layer", "head", "locality_score", "syntactic_score"),
            (
                {"layer": l, "head": h, "locality_score": loc, "syntactic_score": syn}
                for l, (loc_row, syn_row) in enumerate(zip(report.locality, report.syntactic))
                for h, (loc, syn) in enumerate(zip(loc_row, syn_row))
            ),
        )
        write_csv(
            out_dir / "curve.csv",
            ("threshold", "fraction_local", "fraction_syntactic"),
            (
                {"threshold": t, "fraction_local": fl, "fraction_syntactic": fs}
                for t, fl, fs in zip(report.thresholds, report.fraction_local, report.fraction_syntactic)
            ),
        )
        write_json(out_dir / "headmap.json", {"threshold": HEADMAP_THRESHOLD, "labels": report.headmap})
        write_json(out_dir / "bias.json", report.model_dump())
        return {"bias": "bias.csv", "curve": "curve.csv", "headmap": "headmap.json", "bias_report": "bias.json"}

    async def run(
        self,
        checkpoint: Path,
        corpus_path: Path,
        which: str,
        out_dir: Path,
        expected: Optional[ModelConfig] = None,
        max_sentences: Optional[int] = None,
        use_masked: bool = True,
        point: str = "attention",
        window: int = 2,
        include_self: bool = True,
        seed: Optional[int] = None,
    ) -> RunManifest:
        """
        Analyse a checkpoint over a corpus and write every report

        Args:
            checkpoint: checkpoint.npz written by train
            corpus_path: JSONL corpus
            which: "sensitivity", "bias" or "both"
            out_dir: Artifact directory
            expected: Architecture the checkpoint must hold (ArtifactError otherwise)
            max_sentences: Cap on sentences for both analyses (defaults 100 / 1000)
            use_masked: Score alpha_tilde rather than raw alpha
            point: Sensitivity measurement point
            window: Local window half-width
            include_self: Token i counts towards its own local subset
            seed: Sentence sampling seed

        Returns:
            The completed manifest
        """
        out_dir = Path(out_dir)
        seed = settings.seed if seed is None else seed
        model, _ = load_checkpoint(checkpoint)
        if expected is not None:
            check_compatible(model, expected, checkpoint)
        corpus = load_corpus(corpus_path)

        manifest = RunManifest(
            command="analyze",
            tool_version=__version__,
            seed=seed,
            config=model.config.model_dump(mode="json"),
            inputs={
                "checkpoint": str(checkpoint),
                "corpus": str(corpus_path),
                "which": which,
                "max_sentences": max_sentences,
                "use_masked": use_masked,
                "point": point,
                "window": window,
                "include_self": include_self,
                "threads": self.threads,
            },
        )
        write_manifest(out_dir, manifest)
        if not corpus:
            logger.warning(f"Corpus {corpus_path} is empty; no reports written")
            finish_manifest(out_dir, manifest, "complete")
            return manifest

        try:
            if which in ("sensitivity", "both"):
                cap = SENSITIVITY_CAP if max_sentences is None else max_sentences
                sentences = sample_sentences(corpus, cap, seed)
                averaged, per_sentence = await self.sensitivity(model, sentences, point, window)
                manifest.outputs.update(self.save_sensitivity(out_dir, averaged, per_sentence))
            if which in ("bias", "both"):
                cap = BIAS_CAP if max_sentences is None else max_sentences
                sentences = sample_sentences(corpus, cap, seed)
                report = await self.bias(model, sentences, use_masked, include_self, window)
                manifest.outputs.update(self.save_bias(out_dir, report))
        except Exception as e:
            finish_manifest(out_dir, manifest, "failed", str(e))
            raise
        finish_manifest(out_dir, manifest, "complete")
        return manifest
