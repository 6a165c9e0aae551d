"""Core domain types: vocabulary, sequence state, prediction frames, config, traces.

Position conventions used throughout the package:

* ``core`` operations (state construction and updates) index the full
  sequence, prompt included.
* Samplers, the scheduler, cache scopes, traces, and metrics all work in
  generation-region coordinates ``[0, L)``.  The decoder converts to
  absolute indices only when it calls a predictor or updates the state.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Iterable, Sequence

#: Confidence stored for positions that no denoise call has touched yet.
SENTINEL_CONFIDENCE = -1.0

SAMPLERS = ("vanilla", "linear", "dynamic")
SCHEDULERS = ("fixed", "adaptive")
CACHES = ("none", "prefix", "dual")


@dataclass(frozen=True)
class Vocabulary:
    """Ordered token table with the two special ids every decode needs."""

    tokens: tuple[str, ...]
    mask_id: int
    eos_id: int

    def __post_init__(self) -> None:
        if len(set(self.tokens)) != len(self.tokens):
            raise ValueError("duplicate token strings break the token<->id bijection")
        for name, tid in (("mask_id", self.mask_id), ("eos_id", self.eos_id)):
            if not 0 <= tid < len(self.tokens):
                raise ValueError(f"{name}={tid} outside [0, {len(self.tokens)})")
        if self.mask_id == self.eos_id:
            raise ValueError("mask_id and eos_id must be distinct")

    @property
    def size(self) -> int:
        return len(self.tokens)

    def id_of(self, token: str) -> int:
        try:
            return self.tokens.index(token)
        except ValueError:
            raise KeyError(f"unknown token {token!r}") from None

    def token_of(self, token_id: int) -> str:
        return self.tokens[token_id]

    @classmethod
    def build(
        cls,
        regular_tokens: Sequence[str],
        mask_token: str = "[MASK]",
        eos_token: str = "<EOS>",
    ) -> "Vocabulary":
        """Assemble a vocabulary from regular tokens plus the two specials."""
        toks = list(dict.fromkeys(regular_tokens))
        for special in (mask_token, eos_token):
            if special not in toks:
                toks.append(special)
        return cls(tuple(toks), toks.index(mask_token), toks.index(eos_token))


@dataclass(frozen=True)
class SequenceState:
    """The evolving token sequence: committed prompt, generation region, mask occupancy.

    ``step`` counts remaining denoise-sample iterations and only decreases.
    """

    tokens: tuple[int, ...]
    prompt_len: int
    gen_budget: int
    step: int
    mask_id: int

    def __post_init__(self) -> None:
        if len(self.tokens) != self.prompt_len + self.gen_budget:
            raise ValueError("token vector length must equal prompt_len + gen_budget")
        if self.step < 0:
            raise ValueError("step counter cannot be negative")

    @property
    def length(self) -> int:
        return len(self.tokens)

    def is_masked(self, pos: int) -> bool:
        return self.tokens[pos] == self.mask_id

    def masked_positions(self) -> tuple[int, ...]:
        """Absolute indices currently holding the mask token."""
        return tuple(i for i, t in enumerate(self.tokens) if t == self.mask_id)

    def gen_masked(self) -> frozenset[int]:
        """Masked positions in generation-region coordinates."""
        lp = self.prompt_len
        return frozenset(
            i - lp for i in range(lp, self.length) if self.tokens[i] == self.mask_id
        )

    def unmasked_gen_count(self) -> int:
        lp = self.prompt_len
        return sum(1 for i in range(lp, self.length) if self.tokens[i] != self.mask_id)


@dataclass(frozen=True)
class PredictionFrame:
    """Per-position greedy predictions and confidences from one denoise call.

    Positions outside ``evaluated`` carry values forward from the previous
    frame; before any call they hold ``mask_id`` / :data:`SENTINEL_CONFIDENCE`.
    """

    predicted: tuple[int, ...]
    confidence: tuple[float, ...]
    evaluated: frozenset[int]

    def __post_init__(self) -> None:
        if len(self.predicted) != len(self.confidence):
            raise ValueError("predicted and confidence must be index-aligned")

    @classmethod
    def sentinel(cls, length: int, mask_id: int) -> "PredictionFrame":
        return cls(
            predicted=(mask_id,) * length,
            confidence=(SENTINEL_CONFIDENCE,) * length,
            evaluated=frozenset(),
        )

    def merge(
        self, positions: Iterable[int], values: Iterable[tuple[int, float]]
    ) -> "PredictionFrame":
        """New frame with ``positions`` overwritten and marked evaluated."""
        pred = list(self.predicted)
        conf = list(self.confidence)
        pos_set = set()
        for p, (tok, c) in zip(positions, values, strict=True):
            pred[p] = tok
            conf[p] = c
            pos_set.add(p)
        return PredictionFrame(tuple(pred), tuple(conf), frozenset(pos_set))


def init_state(
    prompt: Sequence[int], gen_budget: int, max_steps: int, mask_id: int
) -> SequenceState:
    """Build the initial state: the prompt followed by ``gen_budget`` masks."""
    if len(prompt) == 0:
        raise ValueError("prompt must not be empty")
    if mask_id in prompt:
        raise ValueError("prompt must not contain the mask token")
    if gen_budget < 1:
        raise ValueError("gen_budget must be >= 1")
    if max_steps < 1:
        raise ValueError("max_steps must be >= 1")
    return SequenceState(
        tokens=tuple(prompt) + (mask_id,) * gen_budget,
        prompt_len=len(prompt),
        gen_budget=gen_budget,
        step=max_steps,
        mask_id=mask_id,
    )


def apply_sample(
    state: SequenceState, frame: PredictionFrame, selected: Iterable[int]
) -> SequenceState:
    """Commit predicted tokens at ``selected`` (absolute) positions.

    Every selected position must currently be masked; all other positions are
    untouched and the step counter decreases by one.  The empty selection is a
    legal no-op step.
    """
    if state.step < 1:
        raise ValueError("step budget exhausted; cannot advance")
    sel = sorted(set(selected))
    tokens = list(state.tokens)
    for pos in sel:
        if not 0 <= pos < len(tokens):
            raise ValueError(f"selected position {pos} out of range")
        if tokens[pos] != state.mask_id:
            raise ValueError(f"selected position {pos} is not masked")
        new_tok = frame.predicted[pos]
        if new_tok == state.mask_id:
            raise ValueError(f"frame predicts the mask token at position {pos}")
        tokens[pos] = new_tok
    return replace(state, tokens=tuple(tokens), step=state.step - 1)


@dataclass(frozen=True)
class DecodeConfig:
    """All decode hyperparameters.

    Defaults follow the documented engine defaults: tau=0.9, b0=32,
    tau_d=0.3, window_fraction=0.25.
    """

    gen_budget: int
    max_steps: int
    tau: float = 0.9
    b0: int = 32
    tau_d: float = 0.3
    delimiters: frozenset[int] = frozenset()
    window_fraction: float = 0.25
    sampler: str = "dynamic"
    scheduler: str = "fixed"
    cache: str = "none"
    linear_steps: int | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 < self.tau <= 1.0:
            raise ValueError("tau must lie in (0, 1]")
        if not 0.0 < self.tau_d <= 1.0:
            raise ValueError("tau_d must lie in (0, 1]")
        if self.b0 < 1:
            raise ValueError("b0 must be >= 1")
        if self.gen_budget < 1:
            raise ValueError("gen_budget must be >= 1")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if not 0.0 < self.window_fraction <= 1.0:
            raise ValueError("window_fraction must lie in (0, 1]")
        if self.sampler not in SAMPLERS:
            raise ValueError(f"sampler must be one of {SAMPLERS}")
        if self.scheduler not in SCHEDULERS:
            raise ValueError(f"scheduler must be one of {SCHEDULERS}")
        if self.cache not in CACHES:
            raise ValueError(f"cache must be one of {CACHES}")
        if self.linear_steps is not None and self.linear_steps < 1:
            raise ValueError("linear_steps must be >= 1")

    def validate_against(self, vocab: Vocabulary) -> None:
        """Check vocabulary-dependent constraints on the delimiter set."""
        for d in self.delimiters:
            if not 0 <= d < vocab.size:
                raise ValueError(f"delimiter id {d} outside the vocabulary")
            if d == vocab.mask_id:
                raise ValueError("the mask token cannot be a delimiter")

    @property
    def effective_linear_steps(self) -> int:
        return self.linear_steps if self.linear_steps is not None else self.max_steps


# Plain-text config files: one `key = value` per line, '#' comments.
_CONFIG_FIELDS = {f.name for f in fields(DecodeConfig)}


def _parse_config_value(key: str, raw: str):
    raw = raw.strip()
    if key in ("tau", "tau_d", "window_fraction"):
        return float(raw)
    if key in ("gen_budget", "max_steps", "b0", "seed"):
        return int(raw)
    if key == "linear_steps":
        return None if raw.lower() in ("", "none") else int(raw)
    if key == "delimiters":
        if not raw:
            return frozenset()
        return frozenset(int(tok) for tok in raw.replace(",", " ").split())
    if key in ("sampler", "scheduler", "cache"):
        return raw
    raise KeyError(key)


def config_from_text(text: str) -> DecodeConfig:
    """Parse a key=value config document into a :class:`DecodeConfig`."""
    values: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ValueError(f"line {lineno}: expected key = value")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if key not in _CONFIG_FIELDS:
            raise ValueError(f"line {lineno}: unknown config key {key!r}")
        values[key] = _parse_config_value(key, raw)
    missing = {"gen_budget", "max_steps"} - values.keys()
    if missing:
        raise ValueError(f"missing required config keys: {sorted(missing)}")
    return DecodeConfig(**values)


def load_config(path: str | Path) -> DecodeConfig:
    return config_from_text(Path(path).read_text(encoding="utf-8"))


def config_to_text(config: DecodeConfig) -> str:
    lines = []
    for f in fields(DecodeConfig):
        value = getattr(config, f.name)
        if f.name == "delimiters":
            value = ",".join(str(d) for d in sorted(value))
        elif f.name == "linear_steps":
            value = "none" if value is None else value
        lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class StepRecord:
    """One denoise-sample cycle as recorded in a trace.

    ``block_size`` is set only on block-opening records; ``block_start`` and
    ``block_end`` describe the block in effect on every record so each record
    is self-contained for analysis.  All positions are generation-relative.
    """

    step: int
    block_start: int
    block_end: int
    block_size: int | None
    evaluated: tuple[int, ...]
    predicted: tuple[int, ...]
    confidence: tuple[float, ...]
    sampled: tuple[int, ...]
    masked_before: tuple[int, ...]
    cache: str

    @property
    def is_block_open(self) -> bool:
        return self.block_size is not None


@dataclass(frozen=True)
class DecodeTrace:
    """Ordered step records plus the geometry needed to interpret them."""

    prompt_len: int
    gen_budget: int
    steps: tuple[StepRecord, ...]

    def __len__(self) -> int:
        return len(self.steps)
