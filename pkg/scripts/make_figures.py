"""Write the CSV data behind the three figures (Riccati curves, Phi, epsilon(N)).

    python scripts/make_figures.py --out results/figures [--config my.cfg] [--workers 4]
"""

import argparse
import sys

from stackmfg.cli import main as cli_main


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results/figures")
    ap.add_argument("--config")
    ap.add_argument("--workers", default="1")
    args = ap.parse_args()
    extra = ["--config", args.config] if args.config else []
    for cmd in ("riccati", "phi", "sweep"):
        code = cli_main([cmd, "--out", f"{args.out}/{cmd}", "--workers", args.workers, *extra])
        if code:
            sys.exit(code)
        print(f"{cmd}: wrote {args.out}/{cmd}")


if __name__ == "__main__":
    main()
