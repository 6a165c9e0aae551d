"""Experiment harness: spec parsing, sweeps, aggregation, analysis, CLI."""

import csv

import pytest

from semiar import cli, experiment
from semiar.core import DecodeConfig
from semiar.decoder import decode
from semiar.predictors import SyntheticFieldParams, build_synthetic
from semiar.tracefile import write_trace

SPEC_TEMPLATE = """
[experiment]
seed = 11
repetitions = 2
prompt = literal:0 1

[predictor]
kind = synthetic
delimiter_period = 4
vb_high = 0.92

[cell sweep]
gen_budget = 24
max_steps = 24
b0 = 4,8
scheduler = fixed,adaptive
sampler = dynamic
cache = none
delimiter_tokens = \\n
"""


def write_spec(tmp_path, text=SPEC_TEMPLATE):
    path = tmp_path / "exp.spec"
    path.write_text(text)
    return path


class TestSpecParsing:
    def test_cross_product_expansion(self, tmp_path):
        spec = experiment.load_spec(write_spec(tmp_path), tmp_path / "out")
        assert len(spec.cells) == 4
        ids = sorted(c.cell_id for c in spec.cells)
        assert ids == [
            "sweep.b0=4-scheduler=adaptive",
            "sweep.b0=4-scheduler=fixed",
            "sweep.b0=8-scheduler=adaptive",
            "sweep.b0=8-scheduler=fixed",
        ]
        assert all(c.config.delimiters for c in spec.cells)

    def test_zero_repetitions_rejected(self, tmp_path):
        text = SPEC_TEMPLATE.replace("repetitions = 2", "repetitions = 0")
        with pytest.raises(ValueError, match="repetitions"):
            experiment.load_spec(write_spec(tmp_path, text))

    def test_missing_cells_rejected(self, tmp_path):
        text = "[experiment]\nseed = 1\n\n[predictor]\nkind = synthetic\n"
        with pytest.raises(ValueError, match="cell"):
            experiment.load_spec(write_spec(tmp_path, text))

    def test_unknown_cell_key_rejected(self, tmp_path):
        text = SPEC_TEMPLATE + "block = 9\n"
        with pytest.raises(ValueError, match="unknown key"):
            experiment.load_spec(write_spec(tmp_path, text))


class TestRun:
    def test_sweep_produces_per_run_files_and_aggregate(self, tmp_path):
        spec = experiment.load_spec(write_spec(tmp_path), tmp_path / "out")
        outcomes, csv_path = experiment.run(spec)
        assert len(outcomes) == 8
        assert all(oc.error is None for oc in outcomes)
        rows = list(csv.DictReader(csv_path.open()))
        assert len(rows) == 8
        assert set(experiment.AGGREGATE_COLUMNS) == set(rows[0])
        traces = list((tmp_path / "out").rglob("*.trace.jsonl"))
        summaries = list((tmp_path / "out").rglob("*.summary.json"))
        assert len(traces) == len(summaries) == 8

    def test_rerun_is_byte_identical(self, tmp_path):
        spec = experiment.load_spec(write_spec(tmp_path), tmp_path / "out")
        _, csv_path = experiment.run(spec)
        first = csv_path.read_bytes()
        _, csv_path = experiment.run(spec)
        assert csv_path.read_bytes() == first

    def test_jobs_do_not_change_results(self, tmp_path):
        spec1 = experiment.load_spec(write_spec(tmp_path), tmp_path / "o1")
        spec2 = experiment.load_spec(write_spec(tmp_path), tmp_path / "o2")
        _, csv1 = experiment.run(spec1, jobs=1)
        _, csv2 = experiment.run(spec2, jobs=4)
        assert csv1.read_bytes() == csv2.read_bytes()

    def test_disabled_delimiters_match_fixed_rows(self, tmp_path):
        text = SPEC_TEMPLATE.replace("delimiter_tokens = \\n\n", "")
        spec = experiment.load_spec(write_spec(tmp_path, text), tmp_path / "out")
        _, csv_path = experiment.run(spec)
        rows = list(csv.DictReader(csv_path.open()))
        by_key = {}
        for row in rows:
            key = (row["b0"], row["seed"])
            by_key.setdefault(key, []).append(row)
        compared = 0
        for (b0, seed), pair in by_key.items():
            if len(pair) != 2:
                continue
            a, b = pair
            for col in ("steps", "nfe", "late_overhead_rate", "premature_rate"):
                assert a[col] == b[col], (b0, seed, col)
            compared += 1
        assert compared == 4

    def test_failing_cell_is_isolated(self, tmp_path):
        # record a short dynamic decode, then replay it under a sampler that
        # needs more steps than were recorded: that cell fails, others survive
        pred = build_synthetic(SyntheticFieldParams(noise_seed=3, vb_high=0.92))
        cfg = DecodeConfig(gen_budget=12, max_steps=12, b0=12, tau=0.5)
        result = decode(pred, cfg, (0, 1))
        trace_path = tmp_path / "seed.trace.jsonl"
        write_trace(trace_path, result.trace, pred.vocabulary, prompt=(0, 1), config=cfg)

        text = f"""
[experiment]
seed = 5
repetitions = 1
prompt = literal:0 1

[predictor]
kind = trace
path = {trace_path}

[cell ok]
gen_budget = 12
max_steps = 12
b0 = 12
tau = 0.5
sampler = dynamic

[cell starved]
gen_budget = 12
max_steps = 12
b0 = 12
sampler = vanilla
"""
        spec = experiment.load_spec(write_spec(tmp_path, text), tmp_path / "out")
        outcomes, csv_path = experiment.run(spec)
        by_cell = {oc.cell.cell_id: oc for oc in outcomes}
        assert by_cell["ok"].error is None
        assert by_cell["starved"].error is not None
        rows = list(csv.DictReader(csv_path.open()))
        assert [r["cell"] for r in rows] == ["ok"]


class TestAnalyze:
    def test_reports_per_trace_plus_summary(self, tmp_path):
        spec = experiment.load_spec(write_spec(tmp_path), tmp_path / "out")
        experiment.run(spec)
        summary = experiment.analyze(tmp_path / "out")
        assert summary.exists()
        rows = list(csv.DictReader(summary.open()))
        assert len(rows) == 8
        reports = list(summary.parent.glob("*.steps.csv"))
        heatmaps = list(summary.parent.glob("*.heatmap.csv"))
        regimes = list(summary.parent.glob("*.regimes.csv"))
        assert len(reports) == len(heatmaps) == len(regimes) == 8

    def test_idempotent(self, tmp_path):
        spec = experiment.load_spec(write_spec(tmp_path), tmp_path / "out")
        experiment.run(spec)
        first = experiment.analyze(tmp_path / "out").read_bytes()
        second = experiment.analyze(tmp_path / "out").read_bytes()
        assert first == second

    def test_empty_directory_errors(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            experiment.analyze(tmp_path)

    def test_malformed_trace_skipped(self, tmp_path):
        spec = experiment.load_spec(write_spec(tmp_path), tmp_path / "out")
        experiment.run(spec)
        bad = tmp_path / "out" / "broken.trace.jsonl"
        bad.write_text("not json\n")
        summary = experiment.analyze(tmp_path / "out")
        rows = list(csv.DictReader(summary.open()))
        assert len(rows) == 8  # the broken file is skipped, not fatal


class TestCli:
    def test_run_then_analyze_then_replay(self, tmp_path, capsys):
        spec_path = write_spec(tmp_path)
        out = tmp_path / "out"
        assert cli.main(["run", "--spec", str(spec_path), "--out", str(out)]) == 0
        assert (out / "aggregate.csv").exists()

        assert cli.main(["analyze", "--traces", str(out)]) == 0
        assert (out / "analysis" / "failures.csv").exists()

        trace = sorted(out.rglob("*.trace.jsonl"))[0]
        assert cli.main(["replay", "--trace", str(trace)]) == 0
        replayed = sorted(trace.parent.glob("*.replayed.trace.jsonl"))
        assert replayed
        # deterministic replay reproduces the recorded trace byte for byte
        assert replayed[0].read_bytes() == trace.read_bytes()

    def test_bad_spec_returns_nonzero(self, tmp_path):
        text = SPEC_TEMPLATE.replace("kind = synthetic", "kind = trace\npath = missing.jsonl")
        spec_path = write_spec(tmp_path, text)
        assert cli.main(["run", "--spec", str(spec_path)]) != 0
