"""Decode-loop behaviour: scopes, invariants, counters, cache semantics."""

import itertools

import pytest

from semiar.core import DecodeConfig
from semiar.decoder import DecodeError, decode, evaluation_scope, result_summary
from semiar.predictors import (
    MaskPredictor,
    SyntheticFieldParams,
    build_ngram,
    build_synthetic,
)

CORPUS = " . ".join(["a b c d e", "f g h i j", "k l m n o"] * 6)


def synthetic(**kw):
    base = dict(noise_seed=7, vb_width_mean=3, vb_low=0.4, vb_high=0.85)
    base.update(kw)
    return build_synthetic(SyntheticFieldParams(**base))


def check_invariants(result, config):
    """Structural invariants every decode must satisfy."""
    trace = result.trace
    L = config.gen_budget
    unmasked = set()
    prev_start = 0
    for rec in trace.steps:
        masked = set(rec.masked_before)
        sampled = set(rec.sampled)
        assert sampled <= masked, "sampled set escapes the masked set"
        assert masked.isdisjoint(unmasked), "a committed position re-masked"
        assert rec.block_start >= prev_start
        prev_start = rec.block_start
        unmasked |= sampled
    if result.completed:
        starts = [r.block_start for r in trace.steps if r.is_block_open]
        sizes = [r.block_size for r in trace.steps if r.is_block_open]
        assert starts == sorted(starts)
        tiled = list(itertools.accumulate(sizes, initial=0))
        assert starts == tiled[:-1], "blocks must tile the region in order"
        assert tiled[-1] == L, "block sizes must sum to the budget"
        # in-block closure: when a later block opens, everything before is done
        for rec in trace.steps:
            if rec.is_block_open:
                assert all(m >= rec.block_start for m in rec.masked_before)
    assert result.denoise_calls == len(trace.steps)
    assert result.position_evaluations == sum(len(r.evaluated) for r in trace.steps)
    assert result.steps_used <= config.max_steps


class TestEvaluationScope:
    def test_none_open_is_full_region(self):
        assert evaluation_scope("none", 4, None, "open", {5, 9}, 16) == frozenset(range(16))

    def test_none_in_block_is_every_masked_position(self):
        assert evaluation_scope("none", 4, 4, "in_block", {5, 6, 9}, 16) == {5, 6, 9}

    def test_prefix_is_suffix_from_block_start(self):
        assert evaluation_scope("prefix", 32, None, "open", set(), 64) == frozenset(
            range(32, 64)
        )
        assert evaluation_scope("prefix", 32, 8, "in_block", {33}, 64) == frozenset(
            range(32, 64)
        )

    def test_dual_freezes_out_of_block(self):
        scope = evaluation_scope("dual", 4, 4, "in_block", {5, 6, 9}, 16)
        assert scope == {5, 6}

    def test_dual_open_is_full_region(self):
        assert evaluation_scope("dual", 4, None, "open", {5}, 16) == frozenset(range(16))

    def test_unknown_policy_or_phase(self):
        with pytest.raises(ValueError):
            evaluation_scope("block", 0, 1, "open", set(), 4)
        with pytest.raises(ValueError):
            evaluation_scope("none", 0, 1, "between", set(), 4)


class TestDecodeLoop:
    def test_single_block_completes_with_invariants(self):
        cfg = DecodeConfig(gen_budget=8, max_steps=8, b0=8, sampler="dynamic")
        result = decode(synthetic(), cfg, (0, 1))
        assert result.completed
        assert sum(d.block_size for d in result.blocks) == 8
        check_invariants(result, cfg)

    def test_vanilla_takes_exactly_one_step_per_token(self):
        L = 12
        cfg = DecodeConfig(gen_budget=L, max_steps=L, b0=4, sampler="vanilla")
        result = decode(synthetic(), cfg, (0,))
        assert result.completed
        assert result.steps_used == L
        assert result.denoise_calls == L
        check_invariants(result, cfg)

    def test_adaptive_with_empty_delimiters_matches_fixed(self):
        fixed = DecodeConfig(gen_budget=16, max_steps=16, b0=4, scheduler="fixed")
        adaptive = DecodeConfig(
            gen_budget=16, max_steps=16, b0=4, scheduler="adaptive",
            delimiters=frozenset(),
        )
        r_fixed = decode(synthetic(), fixed, (0, 1))
        r_adaptive = decode(synthetic(), adaptive, (0, 1))
        assert r_fixed.trace == r_adaptive.trace
        assert r_fixed.final_tokens == r_adaptive.final_tokens

    def test_partial_result_when_budget_exhausted(self):
        cfg = DecodeConfig(gen_budget=16, max_steps=3, b0=8, sampler="vanilla")
        result = decode(synthetic(), cfg, (0,))
        assert result.status == "partial"
        assert result.remaining_masks == 13
        assert result.steps_used == 3

    def test_determinism(self):
        cfg = DecodeConfig(gen_budget=16, max_steps=16, b0=4, cache="dual")
        a = decode(synthetic(), cfg, (0, 1))
        b = decode(synthetic(), cfg, (0, 1))
        assert a == b

    def test_predictor_failure_carries_step_context(self):
        class Exploding(MaskPredictor):
            def __init__(self, inner):
                self.inner = inner
                self.calls = 0

            @property
            def vocabulary(self):
                return self.inner.vocabulary

            def predict(self, state, positions):
                self.calls += 1
                if self.calls > 2:
                    raise RuntimeError("backend gone")
                return self.inner.predict(state, positions)

        cfg = DecodeConfig(gen_budget=8, max_steps=8, b0=4, sampler="vanilla")
        with pytest.raises(DecodeError, match="denoise call 2"):
            decode(Exploding(synthetic()), cfg, (0,))

    def test_all_policy_sampler_scheduler_combinations(self):
        pred_s = synthetic(delimiter_period=4)
        pred_n = build_ngram(CORPUS, order=3, smoothing_k=0.01)
        for predictor, delim in ((pred_s, pred_s.delimiter_id), (pred_n, None)):
            delims = frozenset({delim}) if delim is not None else frozenset()
            prompt = (0, 1)
            for sampler, scheduler, cache in itertools.product(
                ("vanilla", "linear", "dynamic"),
                ("fixed", "adaptive"),
                ("none", "prefix", "dual"),
            ):
                cfg = DecodeConfig(
                    gen_budget=12, max_steps=12, b0=5, sampler=sampler,
                    scheduler=scheduler, cache=cache, delimiters=delims,
                    linear_steps=6,
                )
                result = decode(predictor, cfg, prompt)
                assert result.completed, (sampler, scheduler, cache)
                check_invariants(result, cfg)


class TestCacheSemantics:
    def test_dual_cache_out_of_block_constant_within_block(self):
        cfg = DecodeConfig(gen_budget=16, max_steps=16, b0=8, cache="dual")
        result = decode(synthetic(), cfg, (0, 1))
        by_block = {}
        for rec in result.trace.steps:
            by_block.setdefault(rec.block_start, []).append(rec)
        checked = 0
        for start, recs in by_block.items():
            end = recs[0].block_end
            outside = [i for i in range(16) if not start <= i < end]
            for later in recs[1:]:
                for i in outside:
                    assert later.confidence[i] == recs[0].confidence[i]
                    checked += 1
        assert checked > 0

    def test_nocache_keeps_out_of_block_fresh_for_context_predictors(self):
        pred = build_ngram(CORPUS, order=3, smoothing_k=0.01)
        base = dict(gen_budget=12, max_steps=12, b0=6, tau=0.9)
        prompt = tuple(pred.model.corpus_ids[:3])
        r_none = decode(pred, DecodeConfig(cache="none", **base), prompt)
        r_dual = decode(pred, DecodeConfig(cache="dual", **base), prompt)
        snaps_none = [r.confidence for r in r_none.trace.steps]
        snaps_dual = [r.confidence for r in r_dual.trace.steps]
        assert snaps_none != snaps_dual

    def test_nocache_equals_dualcache_for_narrow_progress_field(self):
        # width-1 band advancing one position per commit: nothing outside the
        # block ever changes value mid-block, so the policies coincide exactly
        pred = synthetic(vb_width_mean=1, plateau_rate=1.0)
        cfg = dict(gen_budget=16, max_steps=16, b0=4)
        r_none = decode(pred, DecodeConfig(cache="none", **cfg), (0, 1))
        r_dual = decode(pred, DecodeConfig(cache="dual", **cfg), (0, 1))
        assert r_none.final_tokens == r_dual.final_tokens
        for a, b in zip(r_none.trace.steps, r_dual.trace.steps):
            assert a.confidence == b.confidence
            assert a.predicted == b.predicted
            assert a.sampled == b.sampled
            assert a.masked_before == b.masked_before
            assert (a.block_start, a.block_end, a.block_size) == (
                b.block_start, b.block_end, b.block_size,
            )

    def test_policies_never_change_sampling(self):
        # scopes always cover the block's masked set, so committed text is
        # cache-invariant; only freshness and evaluation cost differ
        cfg = dict(gen_budget=16, max_steps=16, b0=4)
        results = {
            cache: decode(synthetic(), DecodeConfig(cache=cache, **cfg), (0, 1))
            for cache in ("none", "prefix", "dual")
        }
        tokens = {r.final_tokens for r in results.values()}
        assert len(tokens) == 1
        evals = {c: r.position_evaluations for c, r in results.items()}
        assert evals["none"] >= evals["dual"]


class TestSummary:
    def test_summary_shape(self):
        pred = synthetic()
        cfg = DecodeConfig(gen_budget=8, max_steps=8, b0=4)
        result = decode(pred, cfg, (0, 1))
        summary = result_summary(result, pred.vocabulary)
        assert summary["status"] == "completed"
        assert summary["nfe"] == result.denoise_calls
        assert [b["B"] for b in summary["blocks"]] == [d.block_size for d in result.blocks]
        assert isinstance(summary["text"], str) and summary["text"]
