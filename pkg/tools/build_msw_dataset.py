"""Regenerate src/coordmarket/data/msw.json from the tabulated inputs.

Runs the transport calibration, builds the nine case scenarios and the
zero-profit closure scenario, and writes the result with its calibration
record under ``meta``.
"""
from __future__ import annotations

import sys
from pathlib import Path

from coordmarket.casestudy import write_dataset

TARGET = Path(__file__).resolve().parents[1] / "src" / "coordmarket" / "data" / "msw.json"


def main() -> int:
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else TARGET
    doc = write_dataset(out)
    cal = doc["meta"]["calibration"]
    for leg, bid in cal["transport_bids"].items():
        print(f"{leg:>4} {bid:.6f}")
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
