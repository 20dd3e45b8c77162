"""Console entry point: serve a mirrored landscape file over stdio."""

from __future__ import annotations

import argparse
import sys

from .landscape import load_landscape
from .server import serve_stdio


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="examiner-sut",
        description="Serve a synthetic landscape (or, via the API, a wrapped model) "
                    "to an examiner over the stdio protocol.",
    )
    parser.add_argument("--landscape", required=True, help="landscape JSON file")
    parser.add_argument("--name", default="mirror-landscape", help="name reported in ready")
    args = parser.parse_args(argv)
    try:
        landscape = load_landscape(args.landscape)
    except (OSError, ValueError, KeyError) as exc:
        print(f"examiner-sut: cannot load landscape: {exc}", file=sys.stderr)
        return 2
    return serve_stdio(landscape.evaluate, landscape.train, name=args.name)


if __name__ == "__main__":
    sys.exit(main())
