"""Confidence-dynamics analysis and failure-event detection over decode traces.

Two failure modes of fixed-size blocking are detected per step record:

* late decoding overhead: a masked position outside the current block already
  sits at or above the unmask threshold, so its commit is being deferred and
  it will be re-denoised for nothing;
* premature decoding error: the block forces its best masked position through
  below the threshold even though a strictly more confident masked position
  waits outside, so a worse token is committed in place of a better one.

Regime segmentation labels every (step, position) pair as decoded, plateau,
volatility band, or floor from the confidence snapshots alone.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from .core import DecodeTrace, StepRecord


class Regime(Enum):
    PLATEAU = "plateau"
    VOLATILITY_BAND = "band"
    FLOOR = "floor"
    DECODED = "decoded"


@dataclass(frozen=True)
class LateOverheadEvent:
    step: int
    positions: tuple[int, ...]
    confidences: tuple[float, ...]


@dataclass(frozen=True)
class PrematureEvent:
    step: int
    forced_pos: int
    forced_conf: float
    better_positions: tuple[int, ...]
    better_confidences: tuple[float, ...]


@dataclass(frozen=True)
class FailureReport:
    total_steps: int
    late_overhead: tuple[LateOverheadEvent, ...]
    premature: tuple[PrematureEvent, ...]

    @property
    def late_overhead_steps(self) -> int:
        return len(self.late_overhead)

    @property
    def premature_steps(self) -> int:
        return len(self.premature)

    @property
    def late_overhead_rate(self) -> float:
        return self.late_overhead_steps / self.total_steps

    @property
    def premature_rate(self) -> float:
        return self.premature_steps / self.total_steps


def _outside_masked(record: StepRecord) -> list[int]:
    return [
        m
        for m in record.masked_before
        if not record.block_start <= m < record.block_end
    ]


def _inside_masked(record: StepRecord) -> list[int]:
    return [
        m for m in record.masked_before if record.block_start <= m < record.block_end
    ]


def detect_late_overhead(record: StepRecord, tau: float) -> LateOverheadEvent | None:
    """Masked positions outside the block already at or above the threshold."""
    hits = [j for j in _outside_masked(record) if record.confidence[j] >= tau]
    if not hits:
        return None
    return LateOverheadEvent(
        step=record.step,
        positions=tuple(hits),
        confidences=tuple(record.confidence[j] for j in hits),
    )


def detect_premature(record: StepRecord, tau: float) -> PrematureEvent | None:
    """A sub-threshold forced commit while a strictly better position waits outside.

    The in-block top-1 (lowest index on ties) is recomputed from the record's
    snapshot, which is exactly what the sampler saw at that step.
    """
    inside = _inside_masked(record)
    if not inside:
        return None
    top = inside[0]
    for j in inside[1:]:
        if record.confidence[j] > record.confidence[top]:
            top = j
    forced_conf = record.confidence[top]
    if forced_conf >= tau:
        return None
    better = [j for j in _outside_masked(record) if record.confidence[j] > forced_conf]
    if not better:
        return None
    return PrematureEvent(
        step=record.step,
        forced_pos=top,
        forced_conf=forced_conf,
        better_positions=tuple(better),
        better_confidences=tuple(record.confidence[j] for j in better),
    )


def failure_rates(trace: DecodeTrace, tau: float) -> FailureReport:
    """Count affected sampling steps per event family; a step may count for both."""
    if len(trace) == 0:
        raise ValueError("cannot compute failure rates over an empty trace")
    late = tuple(
        ev for rec in trace.steps if (ev := detect_late_overhead(rec, tau)) is not None
    )
    early = tuple(
        ev for rec in trace.steps if (ev := detect_premature(rec, tau)) is not None
    )
    return FailureReport(total_steps=len(trace), late_overhead=late, premature=early)


def segment_regimes(
    trace: DecodeTrace,
    tau_hi: float = 0.9,
    tau_lo: float = 0.1,
    persistence_k: int = 3,
) -> list[list[Regime]]:
    """Label every (step, position) pair from the trace's confidence snapshots.

    A masked position is plateau when its last ``persistence_k`` snapshots all
    reach ``tau_hi``, floor when they all stay at or below ``tau_lo``, and
    volatility band otherwise; unmasked positions are decoded.  Early steps
    use however much history exists.
    """
    if tau_lo >= tau_hi:
        raise ValueError("tau_lo must be strictly below tau_hi")
    if persistence_k < 1:
        raise ValueError("persistence_k must be >= 1")
    if len(trace) < persistence_k:
        raise ValueError("trace shorter than the persistence window")

    labels: list[list[Regime]] = []
    for r, rec in enumerate(trace.steps):
        masked = set(rec.masked_before)
        window = trace.steps[max(0, r - persistence_k + 1) : r + 1]
        row: list[Regime] = []
        for i in range(trace.gen_budget):
            if i not in masked:
                row.append(Regime.DECODED)
                continue
            history = [w.confidence[i] for w in window]
            if all(c >= tau_hi for c in history):
                row.append(Regime.PLATEAU)
            elif all(c <= tau_lo for c in history):
                row.append(Regime.FLOOR)
            else:
                row.append(Regime.VOLATILITY_BAND)
        labels.append(row)
    return labels


def vb_width_series(labels: list[list[Regime]]) -> list[int]:
    """Volatility-band position count per step, for band-width plots."""
    return [sum(1 for lab in row if lab is Regime.VOLATILITY_BAND) for row in labels]


# ---------------------------------------------------------------------------
# Report files
# ---------------------------------------------------------------------------

def write_step_report(
    path: str | Path,
    trace: DecodeTrace,
    tau: float,
    tau_hi: float = 0.9,
    tau_lo: float = 0.1,
    persistence_k: int = 3,
) -> None:
    """Per-step CSV: step, g, B, both event flags, band width."""
    labels = segment_regimes(trace, tau_hi, tau_lo, persistence_k)
    widths = vb_width_series(labels)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "g", "B", "late_overhead", "premature", "vb_width"])
        for rec, width in zip(trace.steps, widths):
            writer.writerow(
                [
                    rec.step,
                    rec.block_start,
                    rec.block_end - rec.block_start,
                    int(detect_late_overhead(rec, tau) is not None),
                    int(detect_premature(rec, tau) is not None),
                    width,
                ]
            )


def write_heatmap(path: str | Path, trace: DecodeTrace) -> None:
    """Step-by-position confidence matrix for landscape plots."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step"] + [f"p{i}" for i in range(trace.gen_budget)])
        for rec in trace.steps:
            writer.writerow([rec.step] + [repr(c) for c in rec.confidence])


def write_regime_labels(path: str | Path, labels: list[list[Regime]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step"] + [f"p{i}" for i in range(len(labels[0]))])
        for step, row in enumerate(labels):
            writer.writerow([step] + [lab.value for lab in row])


def failure_summary(report: FailureReport) -> dict:
    return {
        "total_steps": report.total_steps,
        "late_overhead_steps": report.late_overhead_steps,
        "late_overhead_rate": report.late_overhead_rate,
        "premature_steps": report.premature_steps,
        "premature_rate": report.premature_rate,
    }


def write_failure_summary(path: str | Path, report: FailureReport) -> None:
    Path(path).write_text(
        json.dumps(failure_summary(report), indent=2) + "\n", encoding="utf-8"
    )
