"""Mask predictors: the pluggable denoiser behind every decode.

Three backends share one interface:

* :class:`SyntheticPredictor` generates a controlled three-regime confidence
  landscape (high plateau behind the decode frontier, a volatility band at
  it, a low floor beyond) for tests that need ground truth.
* :class:`NGramPredictor` scores masked positions from bidirectional add-k
  count tables built over a small corpus, so confidence actually depends on
  nearby committed context.
* :class:`TraceReplayPredictor` serves prediction frames recorded in a trace
  file, one denoise call per recorded step.

A predictor is deterministic given its construction arguments, the sequence
state, and the evaluation scope.  Synthetic and n-gram predictors are
immutable and safe to share across decode sessions; a replay predictor holds
a cursor and belongs to exactly one session.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .core import PredictionFrame, SequenceState, Vocabulary
from .seeding import unit_draw
from . import tracefile


class PredictorError(RuntimeError):
    """Raised when a predictor cannot serve a denoise request."""


class MaskPredictor:
    """Interface: ``denoise(state, eval_positions)`` producing merged frames."""

    @property
    def vocabulary(self) -> Vocabulary:
        raise NotImplementedError

    def predict(
        self, state: SequenceState, positions: Sequence[int]
    ) -> list[tuple[int, float]]:
        """(token, confidence) per absolute position, aligned with input order."""
        raise NotImplementedError

    def denoise(
        self,
        state: SequenceState,
        eval_positions: Iterable[int],
        prior: PredictionFrame | None = None,
    ) -> PredictionFrame:
        """Evaluate ``eval_positions`` and carry everything else from ``prior``."""
        positions = sorted(set(eval_positions))
        for pos in positions:
            if not 0 <= pos < state.length:
                raise PredictorError(f"evaluation position {pos} out of range")
        values = self.predict(state, positions)
        mask_id = self.vocabulary.mask_id
        for pos, (tok, conf) in zip(positions, values):
            if state.tokens[pos] == mask_id:
                if tok == mask_id:
                    raise PredictorError(f"predicted the mask token at {pos}")
                if not 0.0 < conf <= 1.0:
                    raise PredictorError(f"confidence {conf} at {pos} outside (0, 1]")
        base = prior or PredictionFrame.sentinel(state.length, mask_id)
        return base.merge(positions, values)


# ---------------------------------------------------------------------------
# Synthetic confidence field
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SyntheticFieldParams:
    """Shape parameters for the generated confidence landscape.

    The decode frontier is the count of committed generation positions scaled
    by ``plateau_rate``.  Positions behind it form the plateau, a band of
    ``vb_width_mean`` (jittered) positions at it fluctuates per step, and
    everything beyond sits on the floor.  With ``delimiter_period = s > 0`` a
    delimiter token is planted every ``s`` positions and the band stretches
    from the frontier to the end of the current delimiter-bounded span, so
    band width tracks the local span structure instead of the fixed mean.
    """

    plateau_rate: float = 1.0
    vb_width_mean: int = 4
    vb_width_jitter: int = 0
    floor_level: float = 0.05
    vb_low: float = 0.4
    vb_high: float = 0.85
    plateau_level: float = 0.95
    delimiter_period: int = 0
    noise_seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 < self.floor_level < self.vb_low < self.vb_high <= self.plateau_level <= 1.0:
            raise ValueError(
                "need 0 < floor_level < vb_low < vb_high <= plateau_level <= 1"
            )
        if self.vb_width_mean < 1:
            raise ValueError("vb_width_mean must be >= 1")
        if self.vb_width_jitter < 0:
            raise ValueError("vb_width_jitter must be >= 0")
        if self.plateau_rate <= 0.0:
            raise ValueError("plateau_rate must be > 0")
        if self.delimiter_period < 0:
            raise ValueError("delimiter_period must be >= 0")


PLATEAU = "plateau"
BAND = "band"
FLOOR = "floor"

_FILLER_COUNT = 8


class SyntheticPredictor(MaskPredictor):
    """Generates the three-regime confidence landscape by construction."""

    def __init__(self, params: SyntheticFieldParams):
        self.params = params
        fillers = [f"w{i}" for i in range(_FILLER_COUNT)]
        self._vocab = Vocabulary.build(fillers + ["\n"])
        self._delimiter_id = self._vocab.id_of("\n")

    @property
    def vocabulary(self) -> Vocabulary:
        return self._vocab

    @property
    def delimiter_id(self) -> int:
        return self._delimiter_id

    # -- regime geometry ----------------------------------------------------

    def frontier(self, unmasked_count: int, gen_budget: int) -> int:
        return min(gen_budget, math.floor(self.params.plateau_rate * unmasked_count))

    def band_width(self, frontier: int) -> int:
        p = self.params
        if p.delimiter_period > 0:
            # band runs to the end of the current delimiter-bounded span
            span_end = (frontier // p.delimiter_period + 1) * p.delimiter_period - 1
            return span_end - frontier + 1
        if p.vb_width_jitter == 0:
            return p.vb_width_mean
        u = unit_draw(p.noise_seed, "width", frontier)
        offset = round((2.0 * u - 1.0) * p.vb_width_jitter)
        return max(1, p.vb_width_mean + offset)

    def regime_of(self, gen_pos: int, frontier: int) -> str:
        if gen_pos < frontier:
            return PLATEAU
        if gen_pos < frontier + self.band_width(frontier):
            return BAND
        return FLOOR

    # -- field values ---------------------------------------------------------

    def _plateau_conf(self, gen_pos: int) -> float:
        p = self.params
        u = unit_draw(p.noise_seed, "plateau", gen_pos)
        return p.plateau_level + u * (1.0 - p.plateau_level)

    def _floor_conf(self, gen_pos: int) -> float:
        p = self.params
        u = unit_draw(p.noise_seed, "floor", gen_pos)
        return p.floor_level * (0.5 + 0.5 * u)

    def _band_conf(self, gen_pos: int, frontier: int) -> float:
        # fresh draw per (position, frontier): the frontier advances every
        # sampling step, so the band fluctuates in time and space
        p = self.params
        u = unit_draw(p.noise_seed, "band", gen_pos, frontier)
        return p.vb_low + u * (p.vb_high - p.vb_low)

    def confidence_at(self, gen_pos: int, frontier: int) -> float:
        regime = self.regime_of(gen_pos, frontier)
        if regime == PLATEAU:
            return self._plateau_conf(gen_pos)
        if regime == BAND:
            return self._band_conf(gen_pos, frontier)
        return self._floor_conf(gen_pos)

    def token_at(self, gen_pos: int, frontier: int) -> int:
        p = self.params
        if p.delimiter_period > 0 and gen_pos % p.delimiter_period == p.delimiter_period - 1:
            return self._delimiter_id
        if self.regime_of(gen_pos, frontier) == FLOOR:
            return self._vocab.eos_id
        return self._vocab.id_of(f"w{gen_pos % _FILLER_COUNT}")

    def predict(
        self, state: SequenceState, positions: Sequence[int]
    ) -> list[tuple[int, float]]:
        lp = state.prompt_len
        frontier = self.frontier(state.unmasked_gen_count(), state.gen_budget)
        out: list[tuple[int, float]] = []
        for pos in positions:
            gen = pos - lp
            if state.tokens[pos] != state.mask_id:
                # committed tokens keep reading as themselves, scored high
                out.append((state.tokens[pos], self._plateau_conf(gen)))
            else:
                out.append((self.token_at(gen, frontier), self.confidence_at(gen, frontier)))
        return out


def build_synthetic(params: SyntheticFieldParams) -> SyntheticPredictor:
    return SyntheticPredictor(params)


# ---------------------------------------------------------------------------
# Bidirectional n-gram predictor
# ---------------------------------------------------------------------------

def tokenize(corpus: str, char_mode: bool = False) -> list[str]:
    if char_mode:
        return [ch for ch in corpus.strip()]
    return corpus.split()


@dataclass
class NGramModel:
    """Add-k smoothed count tables over left and right contexts of length < n.

    ``left[k]`` maps a k-token context immediately preceding a slot to the
    counts of the token filling it; ``right[k]`` does the same for the k
    tokens immediately following the slot, stored in sentence order.
    """

    order: int
    smoothing_k: float
    vocab: Vocabulary
    left: list[dict[tuple[int, ...], Counter]]
    right: list[dict[tuple[int, ...], Counter]]
    corpus_ids: tuple[int, ...] = ()

    def _context_prob(
        self, table: dict[tuple[int, ...], Counter], ctx: tuple[int, ...], token: int
    ) -> float:
        candidates = self.vocab.size - 1  # every token except the mask
        counts = table.get(ctx)
        total = sum(counts.values()) if counts else 0
        hit = counts.get(token, 0) if counts else 0
        denom = total + self.smoothing_k * candidates
        if denom == 0.0:
            return 1.0 / candidates
        return (hit + self.smoothing_k) / denom

    def blended(
        self, left_ctx: tuple[int, ...], right_ctx: tuple[int, ...], token: int
    ) -> float:
        pl = self._context_prob(self.left[len(left_ctx)], left_ctx, token)
        pr = self._context_prob(self.right[len(right_ctx)], right_ctx, token)
        return 0.5 * pl + 0.5 * pr

    def distribution(
        self, left_ctx: tuple[int, ...], right_ctx: tuple[int, ...]
    ) -> dict[int, float]:
        mask = self.vocab.mask_id
        return {
            tok: self.blended(left_ctx, right_ctx, tok)
            for tok in range(self.vocab.size)
            if tok != mask
        }

    def best_token(
        self, left_ctx: tuple[int, ...], right_ctx: tuple[int, ...]
    ) -> tuple[int, float]:
        """Argmax of the blended distribution, lowest token id on ties.

        Only tokens observed in either context table can beat the shared
        smoothing baseline, so the scan stays proportional to the counts.
        """
        candidates = self.vocab.size - 1
        k = self.smoothing_k
        mask = self.vocab.mask_id

        def side(table, ctx):
            counts = table.get(ctx)
            total = sum(counts.values()) if counts else 0
            denom = total + k * candidates
            if denom == 0.0:  # k == 0 over an unseen context: uniform
                return {}, None
            return counts or {}, denom

        counts_l, denom_l = side(self.left[len(left_ctx)], left_ctx)
        counts_r, denom_r = side(self.right[len(right_ctx)], right_ctx)
        base_l = 1.0 / candidates if denom_l is None else k / denom_l
        base_r = 1.0 / candidates if denom_r is None else k / denom_r

        seen = (set(counts_l) | set(counts_r)) - {mask}

        best_tok, best_p = None, -1.0
        for tok in sorted(seen):
            pl = base_l if denom_l is None else (counts_l.get(tok, 0) + k) / denom_l
            pr = base_r if denom_r is None else (counts_r.get(tok, 0) + k) / denom_r
            p = 0.5 * pl + 0.5 * pr
            if p > best_p:
                best_tok, best_p = tok, p

        baseline = 0.5 * base_l + 0.5 * base_r
        if len(seen) < candidates:  # some token sits at the shared baseline
            unseen = next(
                t for t in range(self.vocab.size) if t != mask and t not in seen
            )
            if best_tok is None or baseline > best_p or (
                baseline == best_p and unseen < best_tok
            ):
                return unseen, baseline
        return best_tok, best_p


class NGramPredictor(MaskPredictor):
    """Scores masked slots from the nearest committed tokens on either side.

    Context is gathered from the ``n-1`` sequence slots immediately left and
    right of a position; masked slots in those windows are skipped, so a
    position with no committed neighbour within reach degrades to the blended
    unigram (or uniform) distribution.  That gradient is what produces
    confidence locality around committed text.
    """

    def __init__(self, model: NGramModel):
        self.model = model

    @property
    def vocabulary(self) -> Vocabulary:
        return self.model.vocab

    def _gather_left(self, state: SequenceState, pos: int) -> tuple[int, ...]:
        window = range(max(0, pos - (self.model.order - 1)), pos)
        return tuple(
            state.tokens[i] for i in window if state.tokens[i] != state.mask_id
        )

    def _gather_right(self, state: SequenceState, pos: int) -> tuple[int, ...]:
        window = range(pos + 1, min(state.length, pos + self.model.order))
        return tuple(
            state.tokens[i] for i in window if state.tokens[i] != state.mask_id
        )

    def predict(
        self, state: SequenceState, positions: Sequence[int]
    ) -> list[tuple[int, float]]:
        out: list[tuple[int, float]] = []
        for pos in positions:
            left = self._gather_left(state, pos)
            right = self._gather_right(state, pos)
            if state.tokens[pos] != state.mask_id:
                tok = state.tokens[pos]
                out.append((tok, self.model.blended(left, right, tok)))
            else:
                out.append(self.model.best_token(left, right))
        return out


def build_ngram(
    corpus: str, order: int, smoothing_k: float, char_mode: bool = False
) -> NGramPredictor:
    """Train the bidirectional count tables from a plain-text corpus."""
    if order < 1:
        raise ValueError("order must be >= 1")
    if smoothing_k < 0:
        raise ValueError("smoothing_k must be >= 0")
    tokens = tokenize(corpus, char_mode)
    if not tokens:
        raise ValueError("corpus is empty after tokenization")

    vocab = Vocabulary.build(sorted(set(tokens)))
    seq = [vocab.id_of(t) for t in tokens]

    left: list[dict[tuple[int, ...], Counter]] = [dict() for _ in range(order)]
    right: list[dict[tuple[int, ...], Counter]] = [dict() for _ in range(order)]
    for p, tok in enumerate(seq):
        for k in range(order):
            if p - k >= 0:
                ctx = tuple(seq[p - k : p])
                left[k].setdefault(ctx, Counter())[tok] += 1
            if p + k < len(seq):
                ctx = tuple(seq[p + 1 : p + 1 + k])
                right[k].setdefault(ctx, Counter())[tok] += 1

    model = NGramModel(order=order, smoothing_k=smoothing_k, vocab=vocab,
                       left=left, right=right, corpus_ids=tuple(seq))
    return NGramPredictor(model)


# ---------------------------------------------------------------------------
# Trace replay
# ---------------------------------------------------------------------------

class ReplayExhausted(PredictorError):
    """The recorded trace ran out before the decode terminated."""


class TraceReplayPredictor(MaskPredictor):
    """Replays recorded prediction frames, one per denoise call, in order.

    Later frames only carry the positions evaluated at that step; earlier
    values accumulate, matching the carry-forward semantics of live frames.
    Each instance owns a cursor, so concurrent sessions need separate
    instances (see :meth:`fork`).
    """

    def __init__(self, data: "tracefile.TraceFileData"):
        self._data = data
        self._vocab = Vocabulary(
            tokens=tuple(data.vocab),
            mask_id=data.mask_id,
            eos_id=data.eos_id,
        )
        self._cursor = 0
        self._served: dict[int, tuple[int, float]] = {}

    @property
    def vocabulary(self) -> Vocabulary:
        return self._vocab

    @property
    def prompt_len(self) -> int:
        return self._data.prompt_len

    @property
    def gen_budget(self) -> int:
        return self._data.gen_budget

    @property
    def recorded_prompt(self) -> tuple[int, ...] | None:
        return self._data.prompt

    @property
    def recorded_config(self):
        return self._data.config

    def fork(self) -> "TraceReplayPredictor":
        """Fresh replayer over the same parsed data, cursor rewound."""
        return TraceReplayPredictor(self._data)

    def predict(
        self, state: SequenceState, positions: Sequence[int]
    ) -> list[tuple[int, float]]:
        if self._cursor >= len(self._data.records):
            raise ReplayExhausted(
                f"trace has {len(self._data.records)} recorded steps; "
                f"denoise call {self._cursor + 1} has nothing to replay"
            )
        rec = self._data.records[self._cursor]
        self._cursor += 1
        for g, tok, conf in zip(rec.positions, rec.pred, rec.conf):
            self._served[g] = (tok, conf)

        lp = self._data.prompt_len
        out: list[tuple[int, float]] = []
        for pos in positions:
            gen = pos - lp
            if gen not in self._served:
                raise PredictorError(
                    f"replay step {self._cursor - 1}: position {gen} absent "
                    f"from the recorded frames"
                )
            out.append(self._served[gen])
        return out


def load_trace_predictor(path: str | Path) -> TraceReplayPredictor:
    """Parse a trace file eagerly and wrap it in a replay predictor."""
    return TraceReplayPredictor(tracefile.read_trace_file(path))
