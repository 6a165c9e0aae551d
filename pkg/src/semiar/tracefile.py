"""Trace file IO: one JSON header line, then one JSON object per denoise step.

Header: ``{"vocab": [...], "mask_id": int, "prompt_len": int, "gen_budget": int}``.
Step lines: ``{"step": int, "g": int, "positions": [int], "pred": [int],
"conf": [float]}`` with the three arrays index-aligned and positions given in
generation-relative coordinates.

Files written by this package additionally carry ``eos_id``, ``prompt`` and
``config`` in the header and ``B``, ``block_end``, ``sampled``, ``masked``,
``cache`` per step line.  The extras let ``analyze`` and ``replay`` work from
the file alone; readers that only need the required keys can ignore them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any

from .core import DecodeConfig, DecodeTrace, PredictionFrame, StepRecord, Vocabulary


class TraceFormatError(ValueError):
    """A trace file violates the schema; the message names the first bad line."""


_HEADER_REQUIRED = ("vocab", "mask_id", "prompt_len", "gen_budget")
_RECORD_REQUIRED = ("step", "g", "positions", "pred", "conf")


@dataclass(frozen=True)
class TraceRecord:
    step: int
    g: int
    positions: tuple[int, ...]
    pred: tuple[int, ...]
    conf: tuple[float, ...]
    block_size: int | None = None
    block_end: int | None = None
    sampled: tuple[int, ...] | None = None
    masked: tuple[int, ...] | None = None
    cache: str | None = None

    @property
    def extended(self) -> bool:
        return self.sampled is not None and self.masked is not None


@dataclass(frozen=True)
class TraceFileData:
    vocab: tuple[str, ...]
    mask_id: int
    eos_id: int
    prompt_len: int
    gen_budget: int
    records: tuple[TraceRecord, ...]
    prompt: tuple[int, ...] | None = None
    config: DecodeConfig | None = None


def config_to_dict(config: DecodeConfig) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for f in fields(DecodeConfig):
        value = getattr(config, f.name)
        if f.name == "delimiters":
            value = sorted(value)
        out[f.name] = value
    return out


def config_from_dict(data: dict[str, Any]) -> DecodeConfig:
    kwargs = dict(data)
    kwargs["delimiters"] = frozenset(kwargs.get("delimiters", ()))
    return DecodeConfig(**kwargs)


def _fallback_eos(vocab: list[str], mask_id: int) -> int:
    if "<EOS>" in vocab:
        return vocab.index("<EOS>")
    return next(i for i in range(len(vocab)) if i != mask_id)


def read_trace_file(path: str | Path) -> TraceFileData:
    """Parse a trace file eagerly, reporting the first malformed line."""
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines:
        raise TraceFormatError(f"{path}: line 1: missing header")

    def bad(lineno: int, why: str) -> TraceFormatError:
        return TraceFormatError(f"{path}: line {lineno}: {why}")

    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise bad(1, f"invalid JSON ({exc.msg})") from exc
    if not isinstance(header, dict):
        raise bad(1, "header must be a JSON object")
    for key in _HEADER_REQUIRED:
        if key not in header:
            raise bad(1, f"header missing key {key!r}")

    vocab = list(header["vocab"])
    mask_id = int(header["mask_id"])
    eos_id = int(header["eos_id"]) if "eos_id" in header else _fallback_eos(vocab, mask_id)
    prompt = tuple(header["prompt"]) if header.get("prompt") is not None else None
    config = config_from_dict(header["config"]) if header.get("config") else None

    records: list[TraceRecord] = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise bad(lineno, f"invalid JSON ({exc.msg})") from exc
        if not isinstance(obj, dict):
            raise bad(lineno, "step record must be a JSON object")
        for key in _RECORD_REQUIRED:
            if key not in obj:
                raise bad(lineno, f"record missing key {key!r}")
        positions = obj["positions"]
        pred = obj["pred"]
        conf = obj["conf"]
        if not (len(positions) == len(pred) == len(conf)):
            raise bad(lineno, "positions/pred/conf arrays are not index-aligned")
        records.append(
            TraceRecord(
                step=int(obj["step"]),
                g=int(obj["g"]),
                positions=tuple(int(p) for p in positions),
                pred=tuple(int(t) for t in pred),
                conf=tuple(float(c) for c in conf),
                block_size=obj.get("B"),
                block_end=obj.get("block_end"),
                sampled=tuple(obj["sampled"]) if "sampled" in obj else None,
                masked=tuple(obj["masked"]) if "masked" in obj else None,
                cache=obj.get("cache"),
            )
        )

    return TraceFileData(
        vocab=tuple(vocab),
        mask_id=mask_id,
        eos_id=eos_id,
        prompt_len=int(header["prompt_len"]),
        gen_budget=int(header["gen_budget"]),
        records=tuple(records),
        prompt=prompt,
        config=config,
    )


def write_trace(
    path: str | Path,
    trace: DecodeTrace,
    vocab: Vocabulary,
    prompt: tuple[int, ...] | None = None,
    config: DecodeConfig | None = None,
) -> None:
    """Serialize a decode trace, header first, one line per step record."""
    header: dict[str, Any] = {
        "vocab": list(vocab.tokens),
        "mask_id": vocab.mask_id,
        "prompt_len": trace.prompt_len,
        "gen_budget": trace.gen_budget,
        "eos_id": vocab.eos_id,
    }
    if prompt is not None:
        header["prompt"] = list(prompt)
    if config is not None:
        header["config"] = config_to_dict(config)

    lines = [json.dumps(header)]
    for rec in trace.steps:
        positions = list(rec.evaluated)
        obj: dict[str, Any] = {
            "step": rec.step,
            "g": rec.block_start,
            "positions": positions,
            "pred": [rec.predicted[p] for p in positions],
            "conf": [rec.confidence[p] for p in positions],
            "B": rec.block_size,
            "block_end": rec.block_end,
            "sampled": list(rec.sampled),
            "masked": list(rec.masked_before),
            "cache": rec.cache,
        }
        lines.append(json.dumps(obj))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def trace_from_file(data: TraceFileData) -> DecodeTrace:
    """Rebuild the full trace (accumulated snapshots included) from file data.

    Requires the extended per-step fields; files holding only the required
    schema keys carry too little to reconstruct sampling decisions.
    """
    L = data.gen_budget
    frame = PredictionFrame.sentinel(L, data.mask_id)
    steps: list[StepRecord] = []
    for rec in data.records:
        if not rec.extended or rec.block_end is None or rec.cache is None:
            raise TraceFormatError(
                "trace lacks the extended per-step fields needed for analysis"
            )
        frame = frame.merge(rec.positions, zip(rec.pred, rec.conf))
        steps.append(
            StepRecord(
                step=rec.step,
                block_start=rec.g,
                block_end=rec.block_end,
                block_size=rec.block_size,
                evaluated=rec.positions,
                predicted=frame.predicted,
                confidence=frame.confidence,
                sampled=rec.sampled,
                masked_before=rec.masked,
                cache=rec.cache,
            )
        )
    return DecodeTrace(prompt_len=data.prompt_len, gen_budget=L, steps=tuple(steps))
