"""Command line: featexport export --model <id> --images <dir> --out <prefix>."""

from __future__ import annotations

import argparse
import json
import sys

from .errors import ExportError
from .export import export_features


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="featexport",
        description="Export image features to NPY files plus a JSON manifest",
    )
    sub = p.add_subparsers(dest="command", required=True)
    sp = sub.add_parser("export", help="run a folder of images through a backbone")
    sp.add_argument("--model", required=True,
                    help="'seeded:<dim>' or a torchvision model name")
    sp.add_argument("--images", required=True, help="directory of images")
    sp.add_argument("--out", required=True, help="output path prefix")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        manifest = export_features(args.model, args.images, args.out)
    except ExportError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1
    sys.stdout.write(json.dumps(manifest.to_dict(), sort_keys=True) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
