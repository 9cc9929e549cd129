"""Command-line entry: aam-export."""

from __future__ import annotations

import argparse
import sys

from .export import ExportJob, export


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aam-export",
        description="Dump per-layer, per-head cross-attention matrices from a "
        "seq2seq checkpoint into AAM1 bundles.",
    )
    parser.add_argument("--model", required=True, help="checkpoint path or identifier")
    parser.add_argument("--amr", required=True, help="Penman file, one graph per block")
    parser.add_argument("--sents", help="sentence file, one per line (default: ::snt)")
    parser.add_argument("-o", "--output", required=True, help="output directory")
    parser.add_argument("--free-decode", action="store_true",
                        help="greedy decoding instead of forcing the reference linearization")
    parser.add_argument("--embedded", action="store_true",
                        help="single-document bundles with base64 payloads")
    parser.add_argument("--max-length", type=int, default=128)
    parser.add_argument("--device", default="cpu")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    job = ExportJob(
        model_path=args.model,
        amr_path=args.amr,
        sents_path=args.sents,
        out_dir=args.output,
        embedded=args.embedded,
        free_decode=args.free_decode,
        max_length=args.max_length,
        device=args.device,
    )
    reports = export(job)
    failures = 0
    for rep in reports:
        if rep.ok:
            print(f"{rep.sentence_id}: wrote {rep.message}")
        else:
            failures += 1
            print(f"{rep.sentence_id}: SKIPPED ({rep.message})", file=sys.stderr)
    print(f"exported {len(reports) - failures}/{len(reports)} sentences")
    return 0 if failures == 0 else 1


if __name__ == "__main__":
    sys.exit(main())
