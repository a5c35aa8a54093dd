"""Training-loss traces for both networks over the configured depth list.

Each depth is trained twice from the same seed to confirm bit-exact replay;
the report records init loss, final loss, and the drop factor per trace.
Writes loss_curves.csv and loss_curves.meta.json under the output directory.
"""
import argparse
import json
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from polarce import harness


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default=None, help="JSON experiment config")
    ap.add_argument("--out", default="runs/loss_curves")
    ap.add_argument("--seed", type=int, default=None)
    args = ap.parse_args()

    cfg = harness.load_config(Path(args.config)) if args.config else harness.default_config()
    if args.seed is not None:
        import dataclasses
        cfg = dataclasses.replace(cfg, sweep=dataclasses.replace(cfg.sweep, seed=args.seed))
    report = harness.run_loss_curves(cfg, args.out)
    drops = {}
    for net in ("stage1", "stage2"):
        for depth, entry in sorted(report[net].items()):
            key = f"{net}/L{depth}"
            drops[key] = entry["drop_factor"]
            print(f"{key:>12s}  init {entry['init_loss']:.4g}  "
                  f"final {entry['final_loss']:.4g}  "
                  f"drop {entry['drop_factor']:.1f}x  "
                  f"replay_ok {entry['rerun_identical']}")
    print(json.dumps(drops, indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
