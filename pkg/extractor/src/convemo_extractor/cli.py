"""Command line for the extraction pipeline.

Example (one invocation per split):

    convemo-extract --dataset meld --transcripts train.csv \\
        --out features/train.jsonl --manifest features/manifest.json \\
        --split train --lm-model /models/roberta-large --cs-model /models/comet
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import (
    DEFAULT_COMMONSENSE_MODEL,
    DEFAULT_UTTERANCE_MODEL,
    CheckpointUnavailable,
    ExtractionConfig,
    ExtractionError,
)
from .pipeline import run_extraction
from .transcripts import PRESETS
from .writer import write_manifest


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="convemo-extract",
        description="Produce emotion-model feature files from dialogue transcripts "
                    "using pretrained language and commonsense models.")
    parser.add_argument("--dataset", required=True, choices=sorted(PRESETS))
    parser.add_argument("--transcripts", required=True,
                        help="split transcript path (dataset root for iemocap)")
    parser.add_argument("--out", required=True, help="feature file to write")
    parser.add_argument("--split", default="train",
                        help="split name recorded in the manifest")
    parser.add_argument("--manifest", help="manifest path to create/update")
    parser.add_argument("--lm-model", default=DEFAULT_UTTERANCE_MODEL)
    parser.add_argument("--cs-model", default=DEFAULT_COMMONSENSE_MODEL)
    parser.add_argument("--no-finetune", action="store_true",
                        help="skip fine-tuning (faster, lower feature quality)")
    parser.add_argument("--epochs", type=int, default=1)
    parser.add_argument("--lr", type=float, default=1e-5)
    parser.add_argument("--batch-size", type=int, default=32)
    parser.add_argument("--max-length", type=int, default=128)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--device", default="cpu")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    config = ExtractionConfig(
        dataset=args.dataset,
        transcript_path=args.transcripts,
        output_path=args.out,
        utterance_model=args.lm_model,
        commonsense_model=args.cs_model,
        finetune=not args.no_finetune,
        finetune_lr=args.lr,
        finetune_batch_size=args.batch_size,
        finetune_epochs=args.epochs,
        seed=args.seed,
        max_length=args.max_length,
        device=args.device,
    )
    try:
        path, class_names = run_extraction(config)
    except CheckpointUnavailable as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ExtractionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {path} ({len(class_names)} classes)")

    if args.manifest:
        manifest_path = Path(args.manifest)
        splits = {}
        if manifest_path.exists():
            splits = json.loads(manifest_path.read_text()).get("splits", {})
        try:
            relative = Path(path).resolve().relative_to(manifest_path.resolve().parent)
        except ValueError:
            relative = Path(path).resolve()
        splits[args.split] = str(relative)
        write_manifest(manifest_path, args.dataset, class_names, splits)
        print(f"updated {manifest_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
