"""`ovextract`: turn an RGB-D capture into a scene bundle directory."""

from __future__ import annotations

import argparse
import json
import sys

from .capture import ExtractError
from .extract import extract, load_job


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="ovextract",
        description="run an image-text encoder + mask generator over RGB-D frames "
        "and write a scene bundle",
    )
    parser.add_argument("--job", required=True, help="job JSON file")
    parser.add_argument("--out", default=None, help="override the job's output directory")
    parser.add_argument("--stride", type=int, default=None, help="override frame stride")
    parser.add_argument("--encoder", default=None, help="override encoder identifier")
    parser.add_argument("--mask-generator", default=None)
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    overrides = {
        k: v
        for k, v in {
            "out": args.out,
            "stride": args.stride,
            "encoder": args.encoder,
            "mask_generator": args.mask_generator,
        }.items()
        if v is not None
    }
    try:
        job = load_job(args.job, overrides)
        out = extract(job)
    except ExtractError as exc:
        print(f"error: {exc}", file=sys.stderr)
        print(json.dumps({"error": "extract-failed", "detail": str(exc)}), file=sys.stderr)
        return 1
    print(f"wrote bundle -> {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
