"""Paired NMSE-vs-SNR sweep of all configured schemes.

Trains stage 1 once and stage 2 per SNR point, then evaluates every scheme
on identical scene and noise realizations. Writes snr_sweep.csv and
snr_sweep.meta.json under the output directory.
"""
import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from polarce import harness


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default=None, help="JSON experiment config")
    ap.add_argument("--out", default="runs/sweep_snr")
    ap.add_argument("--seed", type=int, default=None)
    args = ap.parse_args()

    cfg = harness.load_config(Path(args.config)) if args.config else harness.default_config()
    if args.seed is not None:
        import dataclasses
        cfg = dataclasses.replace(cfg, sweep=dataclasses.replace(cfg.sweep, seed=args.seed))
    records = harness.run_snr_sweep(cfg, args.out, progress=lambda m: print(m, file=sys.stderr))
    for rec in records:
        print(f"{rec['scheme']:>14s}  snr {rec['snr_db']:5.1f} dB  "
              f"nmse {rec['nmse_mean']:.4g} +- {rec['nmse_std']:.3g}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
