"""Command-line entry point: ``xmod-export`` with an ``export`` subcommand."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .errors import ExportError, TemplateError
from .export import DEFAULT_TEMPLATE, ExportJob, export

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_EXPORT = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="xmod-export",
        description="Encode an image folder into the embedding-dataset "
        "directory format.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    exp = sub.add_parser("export", help="run one export job")
    exp.add_argument("--model", required=True,
                     help="encoder tag: 'offline-<dim>' or a CLIP checkpoint id")
    exp.add_argument("--images", required=True, type=Path,
                     help="root folder with one subfolder per class")
    exp.add_argument("--template", default=DEFAULT_TEMPLATE,
                     help="prompt template with one '{}' placeholder")
    exp.add_argument("--out", required=True, type=Path,
                     help="output dataset directory")
    exp.add_argument("--batch-size", type=int, default=32)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        job = ExportJob(
            model_tag=args.model,
            image_root=args.images,
            out_dir=args.out,
            template=args.template,
            batch_size=args.batch_size,
        )
    except (TemplateError, ValueError) as exc:
        parser.error(str(exc))  # exits with status 2
    try:
        out = export(job)
    except ExportError as exc:
        print(f"export failed: {exc}", file=sys.stderr)
        return EXIT_EXPORT
    print(f"wrote {out}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
