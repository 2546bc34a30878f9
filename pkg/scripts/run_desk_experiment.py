#!/usr/bin/env python3
"""End-to-end desk experiment: synthesize data, solve with verification, and
evaluate out of sample.

Runs the same code paths as the installed CLI and prints a short summary.
"""

import argparse
import json
import subprocess
import sys
import tempfile
from pathlib import Path

from vppoffer.cli import main as cli_main


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--workdir", default=None, help="where to put data and outputs (default: temp dir)")
    ap.add_argument("--scenarios", type=int, default=25)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    workdir = Path(args.workdir) if args.workdir else Path(tempfile.mkdtemp(prefix="vppoffer-desk-"))
    data = workdir / "data"
    subprocess.run(
        [sys.executable, str(Path(__file__).with_name("make_synthetic_data.py")), "--out", str(data)],
        check=True,
    )
    config = str(data / "config.json")

    rc = cli_main(
        [
            "solve",
            "--config", config,
            "--scenarios", str(args.scenarios),
            "--seed", str(args.seed),
            "--verify",
            "--gap-tol", "1e-3",
            "--trace",
        ]
    )
    if rc != 0:
        print(f"solve exited with {rc}", file=sys.stderr)
        sys.exit(rc)

    rc = cli_main(
        [
            "evaluate",
            "--config", config,
            "--realized-prices", str(data / "realized_prices.csv"),
            "--realized-pv", str(data / "realized_pv.csv"),
        ]
    )
    if rc != 0:
        print(f"evaluate exited with {rc}", file=sys.stderr)
        sys.exit(rc)

    run = json.loads((data / "run" / "run.json").read_text())
    summary = json.loads((data / "run" / "evaluation_summary.json").read_text())
    print("\n--- desk experiment summary ---")
    print(f"objective          : {run['objective']:.4f}")
    print(f"iterations / sweeps: {run['iterations']} / {run['oracle_sweeps']}")
    print(f"verification gap   : {run['verification']['gap']:.3e}")
    print(f"oos mean profit    : {summary['profit_mean']:.4f} over {summary['n_days']} days")
    print(f"artifacts          : {data / 'run'}")


if __name__ == "__main__":
    main()
