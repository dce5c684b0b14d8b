"""Entry point: `python -m trainer_adapter serve` / `... fetch-data`."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="trainer-adapter")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("serve", help="handle one evaluate request on stdin/stdout")
    p_fetch = sub.add_parser("fetch-data", help="download and cache CIFAR-10")
    p_fetch.add_argument("--dir", type=Path, default=None,
                         help="cache directory (default: TRAINER_DATA_DIR)")
    args = parser.parse_args(argv)

    if args.command == "serve":
        from .protocol import serve

        return serve()

    from .datasets import DEFAULT_CACHE, fetch_cifar10

    path = fetch_cifar10(args.dir or DEFAULT_CACHE)
    print(f"cached: {path}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
