#!/usr/bin/env python3
"""Generate a synthetic data bundle for the offering pipeline.

Writes a price history, a load profile, PV availability bounds, a run config
and a held-out block of realized days (prices + PV) for out-of-sample
evaluation.  Prices follow a two-peak daily shape with lognormal day-level
scaling and hourly noise, all strictly positive.
"""

import argparse
import json
from pathlib import Path

import numpy as np


def price_history(rng, n_days, horizon):
    hours = np.arange(horizon)
    base = 45 + 18 * np.sin((hours - 7) * 2 * np.pi / horizon) + 8 * np.sin(hours * 4 * np.pi / horizon)
    day_scale = rng.lognormal(0.0, 0.15, size=(n_days, 1))
    noise = rng.normal(0.0, 4.0, size=(n_days, horizon))
    return np.maximum(12.0, base[None, :] * day_scale + noise)


def load_profile(rng, horizon):
    hours = np.arange(horizon)
    return 5.0 + 2.0 * np.sin((hours - 18) * 2 * np.pi / horizon) + rng.uniform(0.0, 0.5, horizon)


def pv_bounds(horizon):
    hours = np.arange(horizon)
    nominal = np.maximum(0.0, 40.0 * np.sin((hours - 5) * np.pi / 14))
    width = np.minimum(4.0, nominal)
    return nominal - width, nominal + width


def write_prices(path, matrix, first_day=0):
    lines = ["date,hour,price"]
    for d in range(matrix.shape[0]):
        date = f"d{first_day + d:04d}"
        for t in range(matrix.shape[1]):
            lines.append(f"{date},{t + 1},{float(matrix[d, t])!r}")
    path.write_text("\n".join(lines) + "\n")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="data", help="output directory")
    ap.add_argument("--days", type=int, default=150)
    ap.add_argument("--eval-days", type=int, default=10)
    ap.add_argument("--horizon", type=int, default=24)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(args.seed)

    train = price_history(rng, args.days, args.horizon)
    held_out = price_history(rng, args.eval_days, args.horizon)
    write_prices(out / "prices.csv", train)
    write_prices(out / "realized_prices.csv", held_out, first_day=args.days)

    load = load_profile(rng, args.horizon)
    (out / "load.csv").write_text(
        "hour,kw\n" + "\n".join(f"{t + 1},{float(load[t])!r}" for t in range(args.horizon)) + "\n"
    )

    lower, upper = pv_bounds(args.horizon)
    (out / "pv_bounds.csv").write_text(
        "hour,lower_kw,upper_kw\n"
        + "\n".join(f"{t + 1},{float(lower[t])!r},{float(upper[t])!r}" for t in range(args.horizon))
        + "\n"
    )

    # realized PV: nominal availability with mild day-to-day dips
    nominal = (lower + upper) / 2.0
    lines = ["date,hour,kw"]
    for d in range(args.eval_days):
        dip = rng.uniform(0.85, 1.0)
        for t in range(args.horizon):
            lines.append(f"d{args.days + d:04d},{t + 1},{float(nominal[t] * dip)!r}")
    (out / "realized_pv.csv").write_text("\n".join(lines) + "\n")

    config = {
        "prices_csv": str(out / "prices.csv"),
        "load_csv": str(out / "load.csv"),
        "pv_bounds_csv": str(out / "pv_bounds.csv"),
        "device": {
            "horizon": args.horizon,
            "storage_power_cap": 10.0,
            "energy_min": 1.0,
            "energy_max": 15.0,
            "initial_soc": 8.0,
            "eta_ch": 0.92,
            "eta_dis": 0.92,
            "cost_pv": 5.0,
            "cost_es": 1.0,
            "kappa": 0.1,
            "offer_min": -20.0,
            "offer_max": 60.0,
        },
        "n_states": 5,
        "n_scenarios": 25,
        "budget": 6.0,
        "seed": 0,
        "psm": {},
        "output_dir": str(out / "run"),
    }
    (out / "config.json").write_text(json.dumps(config, sort_keys=True, indent=2) + "\n")
    print(f"wrote synthetic bundle under {out}/")


if __name__ == "__main__":
    main()
