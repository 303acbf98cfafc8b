"""embexport: export embeddings from labeled images, validate embedding files.

Exit codes: 0 ok (export complete / file valid), 1 partial export (some
images skipped) or validation violations, 2 input errors (bad manifest,
encoder load failure).
"""

from __future__ import annotations

import argparse
import sys

from .encoders import EncoderLoadError, make_encoder
from .export import ManifestError, export_embeddings
from .formats import validate_file


def cmd_export(args) -> int:
    try:
        encoder = make_encoder(args.encoder, args.checkpoint, args.seed)
    except EncoderLoadError as exc:
        print(f"error[encoder]: {exc}", file=sys.stderr)
        return 2
    try:
        result = export_embeddings(args.manifest, args.out, args.format, encoder)
    except (ManifestError, OSError, ValueError) as exc:
        print(f"error[manifest]: {exc}", file=sys.stderr)
        return 2
    total = result.written + len(result.skipped)
    print(f"exported {result.written} of {total} records to {args.out} ({len(result.skipped)} skipped)")
    return 0 if result.complete else 1


def cmd_validate(args) -> int:
    report = validate_file(args.path)
    for v in report.violations:
        print(f"violation: {v}")
    for w in report.warnings:
        print(f"warning: {w}")
    print(f"{report.path}: {report.record_count} records, dim={report.dim}, "
          f"{len(report.violations)} violations, {len(report.warnings)} warnings")
    return 0 if not report.violations else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="embexport", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("export", help="encode manifest images into an embedding dataset")
    p.add_argument("--manifest", required=True, help="CSV with header path,label,source")
    p.add_argument("--out", required=True, help="output dataset path")
    p.add_argument("--format", choices=("jsonl", "bin"), default="jsonl")
    p.add_argument("--encoder", choices=("projection", "clip"), default="projection")
    p.add_argument("--checkpoint", help="clip encoder checkpoint (local path or model id)")
    p.add_argument("--seed", type=int, default=0, help="projection encoder seed")
    p.set_defaults(fn=cmd_export)

    p = sub.add_parser("validate", help="check an embedding file (magic/version/dims/norms)")
    p.add_argument("path")
    p.set_defaults(fn=cmd_validate)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
