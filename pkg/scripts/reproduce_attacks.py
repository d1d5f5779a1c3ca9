#!/usr/bin/env python3
"""Replay the four attack/defense experiments and print their reports.

Each scenario is deterministic: the device scripts, allowlists, rule sets,
and random seeds are all pinned in scenarios/*.json.  Exit code 0 iff every
scenario meets its embedded expectations.
"""

from __future__ import annotations

import sys
from pathlib import Path

from usbips.scenario import run_scenario

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"

EXPERIMENTS = [
    ("allowlist_control", "device classification + allowlist access control"),
    ("rubber_ducky", "masquerade keyboard blocked by the CAPTCHA gate"),
    ("captcha_success", "legitimate keyboard passes the CAPTCHA gate"),
    ("hermes_exfiltration", "identity clone caught copying target paths"),
    ("dns_spoof", "rogue adapter's DNS redirection detected and reverted"),
]


def main() -> int:
    failures = 0
    for stem, title in EXPERIMENTS:
        print(f"=== {title} ===")
        report = run_scenario(SCENARIOS / f"{stem}.json")
        print(report.render())
        print()
        failures += 0 if report.passed else 1
    if failures:
        print(f"{failures} experiment(s) failed")
    else:
        print("all experiments reproduced")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
