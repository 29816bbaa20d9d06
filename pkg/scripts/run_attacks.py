#!/usr/bin/env python3
"""Run every attack class across seeds and tabulate detection.

Usage: python scripts/run_attacks.py [N_SEEDS]

Exits nonzero if any scripted attack goes undetected.
"""

import argparse
import json
import sys

from avledger.scenarios import AttackClass, ScenarioEngine, make_attack_config


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("n_seeds", nargs="?", type=int, default=50)
    args = parser.parse_args()

    table = {}
    misses = []
    for cls in AttackClass:
        detected = 0
        for seed in range(args.n_seeds):
            report = ScenarioEngine(make_attack_config(seed, cls)).run().report
            if report.attack_detected:
                detected += 1
            else:
                misses.append((cls.value, seed))
        table[cls.value] = {"detected": detected, "of": args.n_seeds}

    print(json.dumps(table, indent=2, sort_keys=True))
    for cls_name, seed in misses:
        print(f"MISS: {cls_name} seed {seed}", file=sys.stderr)
    return 0 if not misses else 1


if __name__ == "__main__":
    sys.exit(main())
