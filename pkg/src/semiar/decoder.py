"""The blockwise semi-autoregressive decode loop.

Each block runs as: opening denoise over the cache policy's opening scope,
block-size decision on that frame, a first sample restricted to the block,
then denoise-sample cycles over the block's masked positions until the block
holds no masks.  Blocks advance left to right and every denoise-sample cycle
appends one step record to the trace.

Cache policies are modelled as evaluation scopes over prediction frames:

* ``none``   - recompute every masked generation position on every call (the
  whole region when a block opens), so snapshots are always fresh.
* ``prefix`` - recompute everything from the current block start onward;
  positions before the block keep the values from when their block closed.
* ``dual``   - recompute the whole region at block opens but only the block's
  masked positions in between, so out-of-block values stay frozen until the
  next block opens.

The policies change which predictions are fresh and what evaluation work is
charged, never which tokens may be sampled.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .core import (
    DecodeConfig,
    DecodeTrace,
    PredictionFrame,
    SequenceState,
    StepRecord,
    Vocabulary,
    apply_sample,
    init_state,
)
from .predictors import MaskPredictor
from .sampling import sample_step
from .scheduler import BlockDecision, decide_block


class DecodeError(RuntimeError):
    """Raised when a decode session cannot continue."""


def evaluation_scope(
    policy: str,
    g: int,
    block_size: int | None,
    phase: str,
    masked: Iterable[int],
    gen_budget: int,
) -> frozenset[int]:
    """Generation positions one denoise call must evaluate under ``policy``.

    ``phase`` is ``"open"`` for the block-opening call, ``"in_block"``
    otherwise; ``block_size`` may be None while the block is still undecided.
    """
    if phase not in ("open", "in_block"):
        raise ValueError(f"unknown phase {phase!r}")
    if policy == "none":
        if phase == "open":
            return frozenset(range(gen_budget))
        return frozenset(masked)
    if policy == "prefix":
        return frozenset(range(g, gen_budget))
    if policy == "dual":
        if phase == "open":
            return frozenset(range(gen_budget))
        if block_size is None:
            raise ValueError("dual-cache in-block scope needs the block size")
        return frozenset(m for m in masked if g <= m < g + block_size)
    raise ValueError(f"unknown cache policy {policy!r}")


@dataclass(frozen=True)
class DecodeResult:
    """Everything one decode session produced."""

    status: str  # "completed" | "partial"
    final_tokens: tuple[int, ...]
    trace: DecodeTrace
    blocks: tuple[BlockDecision, ...]
    denoise_calls: int
    position_evaluations: int
    steps_used: int
    remaining_masks: int

    @property
    def completed(self) -> bool:
        return self.status == "completed"

    def generated_tokens(self) -> tuple[int, ...]:
        return self.final_tokens[self.trace.prompt_len :]


def _denoise(
    predictor: MaskPredictor,
    state: SequenceState,
    positions: Sequence[int],
    prior: PredictionFrame,
    step_idx: int,
) -> PredictionFrame:
    try:
        return predictor.denoise(state, positions, prior=prior)
    except Exception as exc:
        raise DecodeError(f"predictor failed at denoise call {step_idx}: {exc}") from exc


def decode(
    predictor: MaskPredictor,
    config: DecodeConfig,
    prompt: Sequence[int],
) -> DecodeResult:
    """Run one full decode session.

    Terminates when the generation region holds no masks, or with a partial
    result when the step budget runs out first; nothing is force-committed in
    that case so the trace stays faithful.
    """
    vocab = predictor.vocabulary
    config.validate_against(vocab)
    state = init_state(prompt, config.gen_budget, config.max_steps, vocab.mask_id)
    lp, L = state.prompt_len, config.gen_budget

    frame = PredictionFrame.sentinel(state.length, vocab.mask_id)
    records: list[StepRecord] = []
    blocks: list[BlockDecision] = []
    step_idx = 0
    g = 0

    def record_step(
        scope: frozenset[int],
        sampled: frozenset[int],
        masked: frozenset[int],
        block_size: int | None,
        block_end: int,
    ) -> None:
        records.append(
            StepRecord(
                step=step_idx,
                block_start=g,
                block_end=block_end,
                block_size=block_size,
                evaluated=tuple(sorted(scope)),
                predicted=frame.predicted[lp : lp + L],
                confidence=frame.confidence[lp : lp + L],
                sampled=tuple(sorted(sampled)),
                masked_before=tuple(sorted(masked)),
                cache=config.cache,
            )
        )

    while g < L and state.step >= 1:
        masked = state.gen_masked()
        scope = evaluation_scope(config.cache, g, None, "open", masked, L)
        frame = _denoise(predictor, state, [lp + p for p in sorted(scope)], frame, step_idx)

        decision = decide_block(state, frame, config, g)
        B = decision.block_size
        blocks.append(decision)
        block = range(g, g + B)

        sampled = sample_step(state, frame, config, block)
        record_step(scope, sampled, masked, B, g + B)
        state = apply_sample(state, frame, [lp + p for p in sampled])
        step_idx += 1

        while state.step >= 1:
            masked = state.gen_masked()
            if not any(g <= m < g + B for m in masked):
                break
            scope = evaluation_scope(config.cache, g, B, "in_block", masked, L)
            frame = _denoise(
                predictor, state, [lp + p for p in sorted(scope)], frame, step_idx
            )
            sampled = sample_step(state, frame, config, block)
            record_step(scope, sampled, masked, None, g + B)
            state = apply_sample(state, frame, [lp + p for p in sampled])
            step_idx += 1

        if any(g <= m < g + B for m in state.gen_masked()):
            break  # step budget died inside this block
        g += B

    remaining = len(state.gen_masked())
    return DecodeResult(
        status="completed" if remaining == 0 else "partial",
        final_tokens=state.tokens,
        trace=DecodeTrace(prompt_len=lp, gen_budget=L, steps=tuple(records)),
        blocks=tuple(blocks),
        denoise_calls=len(records),
        position_evaluations=sum(len(r.evaluated) for r in records),
        steps_used=len(records),
        remaining_masks=remaining,
    )


def result_summary(result: DecodeResult, vocab: Vocabulary) -> dict:
    """Summary object mirroring what the trace file cannot carry compactly."""
    text = " ".join(
        vocab.token_of(t) for t in result.generated_tokens() if t != vocab.mask_id
    )
    return {
        "status": result.status,
        "steps": result.steps_used,
        "nfe": result.denoise_calls,
        "position_evals": result.position_evaluations,
        "blocks": [
            {"g": d.window_start, "B": d.block_size, "source": d.source}
            for d in result.blocks
        ],
        "text": text,
    }


def write_summary(path: str | Path, result: DecodeResult, vocab: Vocabulary) -> None:
    Path(path).write_text(
        json.dumps(result_summary(result, vocab), indent=2) + "\n", encoding="utf-8"
    )
