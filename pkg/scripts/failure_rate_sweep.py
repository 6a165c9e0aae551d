#!/usr/bin/env python3
"""Failure-rate shape across fixed block sizes on an n-gram corpus.

Decodes a filler-zone corpus at several fixed block sizes and reports the
per-step late-overhead and premature-commit proportions for each cell.
"""

import argparse
import csv
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from semiar.core import DecodeConfig
from semiar.decoder import decode
from semiar.metrics import failure_rates
from semiar.predictors import build_ngram
from semiar.seeding import unit_draw


def zone_corpus(zone_len: int = 30, run_len: int = 3, reps: int = 8) -> str:
    parts = []
    for _ in range(reps):
        parts.append(" ".join(["the"] * zone_len))
        parts.append("mm")
        parts.append(" ".join(f"r{j}" for j in range(run_len)))
    return " ".join(parts)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="runs/failure_sweep")
    parser.add_argument("--budget", type=int, default=392)
    parser.add_argument("--seeds", type=int, default=50)
    parser.add_argument("--tau", type=float, default=0.9)
    args = parser.parse_args()

    pred = build_ngram(zone_corpus(), order=31, smoothing_k=0.01)
    seq = pred.model.corpus_ids
    rows = []
    for b0 in (16, 32, 64):
        cfg = DecodeConfig(gen_budget=args.budget, max_steps=args.budget * 3,
                           b0=b0, tau=args.tau, cache="none")
        late = prem = steps = 0
        for s in range(args.seeds):
            start = int(unit_draw(s, "p") * (len(seq) - 9))
            result = decode(pred, cfg, tuple(seq[start:start + 8]))
            report = failure_rates(result.trace, args.tau)
            late += report.late_overhead_steps
            prem += report.premature_steps
            steps += report.total_steps
        rows.append([b0, late / steps, prem / steps, steps / args.seeds])
        print(f"B0={b0:3d} late={rows[-1][1]:.4f} premature={rows[-1][2]:.4f} "
              f"mean_steps={rows[-1][3]:.1f}")

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "failure_rates.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["b0", "late_overhead_rate", "premature_rate", "mean_steps"])
        writer.writerows(rows)
    print(f"wrote {out / 'failure_rates.csv'}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
