"""extract-landmarks: batch face-mesh landmarks for a directory of crops."""
from __future__ import annotations

import argparse
import sys


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="extract-landmarks",
        description="Run a face-mesh backend over cropped face images and emit landmark JSON",
    )
    parser.add_argument("--in", dest="input_dir", required=True, help="directory of face crops")
    parser.add_argument("--out", dest="output_dir", required=True, help="directory for landmark JSON")
    parser.add_argument("--backend", choices=["geometric", "mediapipe"], default="geometric")
    parser.add_argument("--jobs", type=int, default=1)
    parser.add_argument("--strict", action="store_true",
                        help="exit nonzero when any image fails (no face or decode error)")
    args = parser.parse_args(argv)

    from .extract import extract_landmarks

    try:
        manifest = extract_landmarks(args.input_dir, args.output_dir,
                                     backend=args.backend, jobs=args.jobs)
    except (ImportError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    for record in manifest.records:
        print(f"{record.status:>10}  {record.source}")
    counts = ", ".join(f"{k}={v}" for k, v in sorted(manifest.counts.items()))
    print(f"backend={manifest.backend_id}  {counts}")
    if args.strict and manifest.failures:
        print(f"strict mode: {len(manifest.failures)} image(s) failed", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
