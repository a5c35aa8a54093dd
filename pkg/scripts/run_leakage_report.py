"""Grid-mismatch leakage scan and cascaded-dictionary drift probe.

Emits leakage_profile.csv (top-1 row-power fractions for on/off-grid
placements plus full |c_r| profiles), drift_profile.csv (cascaded
correlation of a constructed two-hop product vector), and
leakage_profile.meta.json with the summary block.
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
    ap.add_argument("--out", default="runs/leakage")
    args = ap.parse_args()

    cfg = harness.load_config(Path(args.config)) if args.config else harness.default_config()
    summary = harness.run_leakage_report(cfg, args.out)
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
