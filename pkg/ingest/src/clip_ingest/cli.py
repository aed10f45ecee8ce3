"""Command-line front end for the ingestion jobs.

Exit codes: 0 success, 1 usage error, 2 data/configuration error,
3 internal error.
"""

from __future__ import annotations

import argparse
import sys
import traceback

from .encoders import get_encoder
from .pipeline import (
    DEFAULT_TEMPLATES,
    PromptTemplateSet,
    embed_concepts,
    embed_images,
    extract_dnn,
    load_templates,
)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def build_parser() -> _Parser:
    parser = _Parser(prog="clip-ingest", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add_encoder_flags(p):
        p.add_argument("--encoder", choices=("clip", "hashproj"), default="clip",
                       help="embedding backend (default %(default)s)")
        p.add_argument("--checkpoint", help="model checkpoint for --encoder clip")
        p.add_argument("--dim", type=int, default=512,
                       help="embedding width for --encoder hashproj")
        p.add_argument("--batch", type=int, default=16)
        p.add_argument("--out-dir", required=True)

    p_img = sub.add_parser("embed-images", help="one embedding row per image")
    p_img.add_argument("--images", required=True, help="image directory")
    p_img.add_argument("--on-error", choices=("skip", "abort"), default="skip",
                       help="what to do with unreadable images (default %(default)s)")
    add_encoder_flags(p_img)

    p_con = sub.add_parser("embed-concepts",
                           help="one prompt-averaged embedding row per concept")
    p_con.add_argument("--concepts", required=True, help="concept names file")
    p_con.add_argument("--templates",
                       help=f"templates file, one per line with a {{}} placeholder "
                            f"(default: {list(DEFAULT_TEMPLATES)})")
    add_encoder_flags(p_con)

    p_dnn = sub.add_parser("extract-dnn",
                           help="classifier representations, softmax outputs and predictions")
    p_dnn.add_argument("--images", required=True)
    p_dnn.add_argument("--checkpoint", required=True,
                       help="TorchScript archive or pickled module")
    p_dnn.add_argument("--layer", required=True,
                       help="named module whose output is the representation")
    p_dnn.add_argument("--image-size", type=int, default=32)
    p_dnn.add_argument("--batch", type=int, default=16)
    p_dnn.add_argument("--on-error", choices=("skip", "abort"), default="skip")
    p_dnn.add_argument("--out-dir", required=True)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1

    try:
        if args.command == "embed-images":
            encoder = get_encoder(args.encoder, args.checkpoint, args.dim, args.batch)
            path = embed_images(args.images, encoder, args.out_dir,
                                batch=args.batch, on_error=args.on_error)
            print(f"wrote {path}")
        elif args.command == "embed-concepts":
            encoder = get_encoder(args.encoder, args.checkpoint, args.dim, args.batch)
            templates = load_templates(args.templates) if args.templates else \
                PromptTemplateSet(templates=DEFAULT_TEMPLATES)
            path = embed_concepts(args.concepts, encoder, args.out_dir,
                                  templates=templates, batch=args.batch)
            print(f"wrote {path}")
        else:
            outputs = extract_dnn(args.images, args.checkpoint, args.layer,
                                  args.out_dir, batch=args.batch,
                                  image_size=args.image_size, on_error=args.on_error)
            for name, path in outputs.items():
                print(f"wrote {name}: {path}")
        return 0
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception:
        traceback.print_exc()
        return 3


if __name__ == "__main__":
    sys.exit(main())
