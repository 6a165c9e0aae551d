"""Experiment harness: sweep decode configurations, record traces, aggregate results.

Experiment specs are INI-style text files.  ``[experiment]`` holds run-wide
settings, ``[predictor]`` describes the denoiser backend, and every
``[cell NAME]`` section describes one family of decode configurations.  Cell
keys mirror :class:`~semiar.core.DecodeConfig` fields; a comma-separated
value sweeps that key, and the section expands to the cross-product of all
swept keys.  Example::

    [experiment]
    seed = 7
    repetitions = 5
    prompt = corpus:4

    [predictor]
    kind = ngram
    corpus = corpus.txt
    order = 3
    smoothing = 0.01

    [cell sweep]
    gen_budget = 64
    max_steps = 64
    b0 = 16,32,64
    scheduler = fixed,adaptive
    delimiter_tokens = \n

Each run derives its seed from the experiment seed plus the cell and
repetition indices, so paired comparisons across cells reuse identical
streams.  Aggregate rows are ordered by cell then repetition regardless of
worker scheduling, and nothing in the outputs depends on wall-clock time, so
re-running a spec reproduces the files byte for byte.
"""

from __future__ import annotations

import configparser
import csv
import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Callable, Sequence

from . import metrics, tracefile
from .core import DecodeConfig, Vocabulary
from .decoder import DecodeResult, decode, write_summary
from .predictors import (
    MaskPredictor,
    SyntheticFieldParams,
    build_ngram,
    build_synthetic,
    load_trace_predictor,
)
from .seeding import mix_seed, unit_draw

log = logging.getLogger("semiar.experiment")

AGGREGATE_COLUMNS = [
    "cell",
    "scheduler",
    "sampler",
    "cache",
    "b0",
    "tau_d",
    "seed",
    "steps",
    "nfe",
    "position_evals",
    "late_overhead_rate",
    "premature_rate",
    "mean_block_size",
    "completed",
]


@dataclass(frozen=True)
class PredictorSpec:
    kind: str  # synthetic | ngram | trace
    options: dict[str, Any]


@dataclass(frozen=True)
class PromptSpec:
    kind: str  # literal | corpus
    tokens: tuple[int, ...] = ()
    length: int = 4


@dataclass(frozen=True)
class Cell:
    cell_id: str
    config: DecodeConfig
    # cells expanded from one [cell] section share this index, so their runs
    # draw identical seed streams and stay pairwise comparable
    section_index: int = 0


@dataclass(frozen=True)
class ExperimentSpec:
    seed: int
    repetitions: int
    predictor: PredictorSpec
    prompt: PromptSpec
    cells: tuple[Cell, ...]
    out_dir: Path

    def __post_init__(self) -> None:
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if not self.cells:
            raise ValueError("an experiment needs at least one cell")


_SWEEPABLE = {
    "gen_budget": int,
    "max_steps": int,
    "b0": int,
    "seed": int,
    "linear_steps": int,
    "tau": float,
    "tau_d": float,
    "window_fraction": float,
    "sampler": str,
    "scheduler": str,
    "cache": str,
}


def _parse_cell_section(
    name: str, section: configparser.SectionProxy
) -> list[tuple[str, dict[str, Any]]]:
    """Expand one [cell] section into (cell_id, config kwargs) combos."""
    fixed: dict[str, Any] = {}
    swept: dict[str, list[Any]] = {}
    delimiter_tokens: list[str] = []
    for key, raw in section.items():
        if key == "delimiter_tokens":
            delimiter_tokens = raw.split()
            continue
        if key not in _SWEEPABLE:
            raise ValueError(f"cell {name!r}: unknown key {key!r}")
        convert = _SWEEPABLE[key]
        values = [convert(v.strip()) for v in raw.split(",")]
        if len(values) == 1:
            fixed[key] = values[0]
        else:
            swept[key] = values

    combos: list[tuple[str, dict[str, Any]]] = []
    swept_keys = sorted(swept)
    for combo in itertools.product(*(swept[k] for k in swept_keys)):
        kwargs = dict(fixed)
        kwargs.update(zip(swept_keys, combo))
        suffix = "-".join(f"{k}={v}" for k, v in zip(swept_keys, combo))
        cell_id = f"{name}.{suffix}" if suffix else name
        kwargs["_delimiter_tokens"] = delimiter_tokens
        combos.append((cell_id, kwargs))
    return combos


def _resolve_delimiters(
    tokens: Sequence[str], vocab: Vocabulary
) -> frozenset[int]:
    ids = set()
    for tok in tokens:
        tok = tok.replace("\\n", "\n")
        ids.add(vocab.id_of(tok))
    return frozenset(ids)


def build_predictor(spec: PredictorSpec, seed: int) -> MaskPredictor:
    """Instantiate a predictor backend for one run."""
    opts = dict(spec.options)
    if spec.kind == "synthetic":
        params = SyntheticFieldParams(
            plateau_rate=float(opts.get("plateau_rate", 1.0)),
            vb_width_mean=int(opts.get("vb_width_mean", 4)),
            vb_width_jitter=int(opts.get("vb_width_jitter", 0)),
            floor_level=float(opts.get("floor_level", 0.05)),
            vb_low=float(opts.get("vb_low", 0.4)),
            vb_high=float(opts.get("vb_high", 0.85)),
            plateau_level=float(opts.get("plateau_level", 0.95)),
            delimiter_period=int(opts.get("delimiter_period", 0)),
            noise_seed=seed,
        )
        return build_synthetic(params)
    if spec.kind == "ngram":
        corpus = Path(opts["corpus"]).read_text(encoding="utf-8")
        return build_ngram(
            corpus,
            order=int(opts.get("order", 3)),
            smoothing_k=float(opts.get("smoothing", 0.01)),
            char_mode=str(opts.get("char_mode", "false")).lower() == "true",
        )
    if spec.kind == "trace":
        return load_trace_predictor(opts["path"])
    raise ValueError(f"unknown predictor kind {spec.kind!r}")


def parse_spec(text: str, out_dir: Path | None = None) -> ExperimentSpec:
    parser = configparser.ConfigParser()
    parser.optionxform = str.lower  # type: ignore[assignment]
    parser.read_string(text)

    if "experiment" not in parser:
        raise ValueError("spec is missing the [experiment] section")
    exp = parser["experiment"]
    seed = exp.getint("seed", 0)
    repetitions = exp.getint("repetitions", 1)
    out = out_dir or Path(exp.get("out", "runs"))

    prompt_raw = exp.get("prompt", "literal:0")
    kind, _, arg = prompt_raw.partition(":")
    if kind == "literal":
        prompt = PromptSpec("literal", tokens=tuple(int(t) for t in arg.split()))
    elif kind == "corpus":
        prompt = PromptSpec("corpus", length=int(arg or "4"))
    else:
        raise ValueError(f"unknown prompt source {prompt_raw!r}")

    if "predictor" not in parser:
        raise ValueError("spec is missing the [predictor] section")
    pred_section = dict(parser["predictor"])
    pred_kind = pred_section.pop("kind", None)
    if pred_kind not in ("synthetic", "ngram", "trace"):
        raise ValueError(f"predictor kind must be synthetic, ngram or trace; got {pred_kind!r}")
    predictor = PredictorSpec(pred_kind, pred_section)

    # cells are validated against a probe predictor so bad specs fail up front
    probe = build_predictor(predictor, seed)
    cells: list[Cell] = []
    section_index = 0
    for section_name in parser.sections():
        if not section_name.startswith("cell"):
            continue
        name = section_name[4:].strip() or "cell"
        for cell_id, kwargs in _parse_cell_section(name, parser[section_name]):
            delim_tokens = kwargs.pop("_delimiter_tokens")
            config = DecodeConfig(
                delimiters=_resolve_delimiters(delim_tokens, probe.vocabulary),
                **kwargs,
            )
            config.validate_against(probe.vocabulary)
            cells.append(Cell(cell_id, config, section_index))
        section_index += 1
    if not cells:
        raise ValueError("spec defines no [cell] sections")

    return ExperimentSpec(
        seed=seed,
        repetitions=repetitions,
        predictor=predictor,
        prompt=prompt,
        cells=tuple(cells),
        out_dir=Path(out),
    )


def load_spec(path: str | Path, out_dir: Path | None = None) -> ExperimentSpec:
    return parse_spec(Path(path).read_text(encoding="utf-8"), out_dir)


def _corpus_prompt(
    predictor: MaskPredictor, length: int, run_seed: int
) -> tuple[int, ...]:
    """A contiguous window of corpus tokens, start position chosen by the seed."""
    model = getattr(predictor, "model", None)
    seq = getattr(model, "corpus_ids", ()) if model is not None else ()
    if len(seq) < length:
        raise ValueError("corpus too short to sample a prompt window from")
    start = int(unit_draw(run_seed, "prompt") * (len(seq) - length + 1))
    return tuple(seq[start : start + length])


def resolve_prompt(
    spec: PromptSpec, predictor: MaskPredictor, run_seed: int
) -> tuple[int, ...]:
    if spec.kind == "literal":
        if not spec.tokens:
            raise ValueError("literal prompt must list at least one token id")
        return spec.tokens
    return _corpus_prompt(predictor, spec.length, run_seed)


@dataclass(frozen=True)
class RunOutcome:
    cell: Cell
    repetition: int
    run_seed: int
    result: DecodeResult | None
    report: metrics.FailureReport | None
    error: str | None = None


def _execute_run(
    spec: ExperimentSpec, cell_index: int, repetition: int
) -> RunOutcome:
    cell = spec.cells[cell_index]
    run_seed = mix_seed(spec.seed, cell.section_index, repetition)
    try:
        predictor = build_predictor(spec.predictor, run_seed)
        config = replace(cell.config, seed=run_seed)
        prompt = resolve_prompt(spec.prompt, predictor, run_seed)
        result = decode(predictor, config, prompt)
        report = metrics.failure_rates(result.trace, config.tau)

        run_dir = spec.out_dir / cell.cell_id
        run_dir.mkdir(parents=True, exist_ok=True)
        stem = run_dir / f"rep{repetition:03d}"
        tracefile.write_trace(
            stem.with_suffix(".trace.jsonl"),
            result.trace,
            predictor.vocabulary,
            prompt=prompt,
            config=config,
        )
        write_summary(stem.with_suffix(".summary.json"), result, predictor.vocabulary)
        return RunOutcome(cell, repetition, run_seed, result, report)
    except Exception as exc:  # cell isolation: one failure must not sink the sweep
        log.error("cell %s rep %d failed: %s", cell.cell_id, repetition, exc)
        return RunOutcome(cell, repetition, run_seed, None, None, error=str(exc))


def run(spec: ExperimentSpec, jobs: int = 1) -> tuple[list[RunOutcome], Path]:
    """Execute every cell and repetition; returns outcomes and the CSV path."""
    spec.out_dir.mkdir(parents=True, exist_ok=True)
    tasks = [
        (ci, rep)
        for ci in range(len(spec.cells))
        for rep in range(spec.repetitions)
    ]
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(lambda t: _execute_run(spec, *t), tasks))
    else:
        outcomes = [_execute_run(spec, *t) for t in tasks]

    csv_path = spec.out_dir / "aggregate.csv"
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(AGGREGATE_COLUMNS)
        for oc in outcomes:
            if oc.result is None or oc.report is None:
                continue
            cfg = oc.cell.config
            blocks = oc.result.blocks
            mean_b = sum(d.block_size for d in blocks) / len(blocks) if blocks else 0.0
            writer.writerow(
                [
                    oc.cell.cell_id,
                    cfg.scheduler,
                    cfg.sampler,
                    cfg.cache,
                    cfg.b0,
                    repr(cfg.tau_d),
                    oc.run_seed,
                    oc.result.steps_used,
                    oc.result.denoise_calls,
                    oc.result.position_evaluations,
                    repr(oc.report.late_overhead_rate),
                    repr(oc.report.premature_rate),
                    repr(mean_b),
                    int(oc.result.completed),
                ]
            )
    return outcomes, csv_path


def analyze(
    trace_dir: str | Path,
    out_dir: str | Path | None = None,
    tau: float = 0.9,
    tau_hi: float = 0.9,
    tau_lo: float = 0.1,
    persistence_k: int = 3,
) -> Path:
    """Post-process every trace file under ``trace_dir`` into report CSVs."""
    trace_dir = Path(trace_dir)
    out = Path(out_dir) if out_dir is not None else trace_dir / "analysis"
    paths = sorted(trace_dir.rglob("*.trace.jsonl"))
    if not paths:
        raise FileNotFoundError(f"no trace files under {trace_dir}")
    out.mkdir(parents=True, exist_ok=True)

    rows = []
    for path in paths:
        try:
            data = tracefile.read_trace_file(path)
            trace = tracefile.trace_from_file(data)
            report = metrics.failure_rates(trace, tau)
            labels = metrics.segment_regimes(trace, tau_hi, tau_lo, persistence_k)
        except Exception as exc:
            log.warning("skipping %s: %s", path, exc)
            continue
        rel = path.relative_to(trace_dir)
        stem = out / str(rel).replace("/", "__").replace(".trace.jsonl", "")
        metrics.write_step_report(
            f"{stem}.steps.csv", trace, tau, tau_hi, tau_lo, persistence_k
        )
        metrics.write_heatmap(f"{stem}.heatmap.csv", trace)
        metrics.write_regime_labels(f"{stem}.regimes.csv", labels)
        widths = metrics.vb_width_series(labels)
        cfg = data.config
        rows.append(
            [
                str(path.relative_to(trace_dir)),
                cfg.scheduler if cfg else "",
                cfg.sampler if cfg else "",
                cfg.cache if cfg else "",
                cfg.b0 if cfg else "",
                len(trace),
                repr(report.late_overhead_rate),
                repr(report.premature_rate),
                repr(sum(widths) / len(widths)) if widths else "0",
            ]
        )

    summary_path = out / "failures.csv"
    with open(summary_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [
                "trace",
                "scheduler",
                "sampler",
                "cache",
                "b0",
                "steps",
                "late_overhead_rate",
                "premature_rate",
                "mean_vb_width",
            ]
        )
        writer.writerows(rows)
    return summary_path
