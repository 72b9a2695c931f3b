import math

import numpy as np
import pytest

from chasd import rng
from chasd.decoder import (
    DecodeTrace,
    DecoderConfig,
    StepTrace,
    calibrate_step,
    decode,
    decode_step,
    efficiency_report,
    make_streams,
    sample_token,
)
from chasd.numerics import DegenerateLogitsError
from conftest import random_instance
from oracles import enumerate_apc, exact_ceil_kn, loop_softmax, sort_top_m, vanilla_greedy


def test_sample_token_greedy():
    assert sample_token([1, 3, 2], "greedy", 1.0, None) == 1
    assert sample_token([5, 5], "greedy", 1.0, None) == 0


def test_sample_token_frequencies():
    g = np.random.default_rng(0)
    draws = [sample_token([0.0, math.log(3)], "sample", 1.0, g) for _ in range(100_000)]
    freq = np.bincount(draws, minlength=2) / len(draws)
    assert abs(freq[0] - 0.25) <= 0.01 and abs(freq[1] - 0.75) <= 0.01


def test_sample_token_never_picks_masked():
    g = np.random.default_rng(1)
    logits = [-math.inf, 0.0, -math.inf, 0.0, -math.inf]
    assert set(sample_token(logits, "sample", 0.7, g) for _ in range(2000)) == {1, 3}


def test_sample_token_all_masked():
    with pytest.raises(DegenerateLogitsError):
        sample_token([-math.inf, -math.inf], "greedy", 1.0, None)


@pytest.mark.parametrize(
    "kwargs",
    [dict(alpha=-1), dict(beta=1.0), dict(tau=1.1), dict(k=0), dict(sigma=-0.1), dict(mode="beam"),
     dict(temperature=0), dict(max_len=0), dict(seed=-1)],
)
def test_config_invariants(kwargs):
    with pytest.raises(ValueError):
        DecoderConfig(**kwargs)


def test_tau_zero_step_is_plain_argmax(backend):
    prompt, visual = random_instance(0)
    tok, tr = decode_step(backend, prompt, visual, DecoderConfig(tau=0.0), make_streams(0))
    assert tok == int(np.argmax(backend.forward(prompt, visual).logits))
    assert not tr.triggered and tr.forward_calls == 1 and tr.mask_indices == () and tr.candidate_count == 0


def test_always_trigger_without_noise_keeps_argmax(backend):
    cfg = DecoderConfig(tau=1.0, k=1.0, sigma=0.0)
    for s in range(10):
        prompt, visual = random_instance(s)
        tok, tr = decode_step(backend, prompt, visual, cfg, make_streams(0))
        assert tr.triggered and tr.forward_calls == 2
        assert len(tr.mask_indices) == backend.geometry.n_tokens
        assert tok == int(np.argmax(backend.forward(prompt, visual).logits))


def test_step_matches_hand_composed_pipeline(backend):
    cfg = DecoderConfig(tau=1.0, k=0.1, sigma=1.0, seed=5)
    g = backend.geometry
    for s in range(10):
        prompt, visual = random_instance(s)
        tok, tr = decode_step(backend, prompt, visual, cfg, make_streams(cfg.seed, s))

        out = backend.forward(prompt, visual)
        w = out.attention.weights
        scores = [sum(w[h, i] for h in range(w.shape[0])) / w.shape[0] for i in range(g.n_tokens)]
        chosen = sort_top_m(scores, exact_ceil_kn(cfg.k, g.n_tokens))
        noise = rng.stream(cfg.seed, "noise", s).normal(0.0, cfg.sigma, size=visual.pixels.shape)
        px = visual.pixels.copy()
        for j in chosen:
            r, c = divmod(j, g.grid_cols)
            for y in range(r * g.patch_px_h, (r + 1) * g.patch_px_h):
                for x in range(c * g.patch_px_w, (c + 1) * g.patch_px_w):
                    px[:, y, x] += noise[:, y, x]
        l_neg = backend.forward(prompt, visual.replace(px)).logits
        l_ori = out.logits
        keep = enumerate_apc(loop_softmax(list(l_ori)), cfg.beta)
        cd = {i: (1 + cfg.alpha) * l_ori[i] - cfg.alpha * l_neg[i] for i in keep}
        expected = max(keep, key=lambda i: (cd[i], -i))

        assert tr.mask_indices == tuple(chosen)
        assert tr.candidate_count == len(keep)
        assert tok == expected


def test_max_len_one(backend):
    prompt, visual = random_instance(3)
    trace = decode(backend, prompt, visual, DecoderConfig(max_len=1))
    assert trace.length == 1


def test_stops_at_eos(backend):
    prompt, visual = random_instance(4)
    first = decode(backend, prompt, visual, DecoderConfig(max_len=1)).tokens[0]
    trace = decode(backend, prompt, visual, DecoderConfig(max_len=10, eos_token=first))
    assert trace.tokens == [first]


def test_decode_is_deterministic(backend):
    cfg = DecoderConfig(mode="sample", temperature=0.8, seed=3, tau=0.7)
    prompt, visual = random_instance(5)
    a = decode(backend, prompt, visual, cfg, job=2)
    b = decode(backend, prompt, visual, cfg, job=2)
    assert a.steps == b.steps


def test_tau_zero_matches_vanilla_greedy(backend):
    cfg = DecoderConfig(tau=0.0, max_len=12)
    for s in range(50):
        prompt, visual = random_instance(100 + s)
        trace = decode(backend, prompt, visual, cfg, job=s)
        assert trace.tokens == vanilla_greedy(backend, prompt, visual, cfg.max_len, cfg.eos_token)
        assert trace.total_forwards == trace.length


def test_bypass_fidelity_in_sample_mode(backend):
    cfg = DecoderConfig(mode="sample", temperature=1.3, tau=0.5, max_len=20, seed=11)
    bypassed = 0
    for s in range(10):
        prompt, visual = random_instance(200 + s)
        steps = []
        decode(backend, prompt, visual, cfg, job=s, on_step=steps.append)
        replay = rng.stream(cfg.seed, "sample", s)
        for st in steps:
            source = st.l_final if st.trace.triggered else st.l_ori
            assert sample_token(source, "sample", cfg.temperature, replay) == st.token
            if not st.trace.triggered:
                bypassed += 1
                assert np.array_equal(st.l_final, st.l_ori)
    assert bypassed > 0


def test_sigma_does_not_disturb_sampling(backend):
    base = DecoderConfig(mode="sample", tau=0.0, max_len=15, seed=4)
    prompt, visual = random_instance(7)
    a = decode(backend, prompt, visual, base)
    b = decode(backend, prompt, visual, DecoderConfig(**{**base.__dict__, "sigma": 3.0}))
    assert a.tokens == b.tokens


def test_step_one_trigger_monotone_in_tau(backend):
    taus = np.linspace(0, 1, 11)
    for s in range(20):
        prompt, visual = random_instance(300 + s)
        fired = [decode(backend, prompt, visual, DecoderConfig(tau=t, max_len=1)).steps[0].triggered for t in taus]
        assert fired == sorted(fired)


def test_trace_invariants(backend):
    cfg = DecoderConfig(tau=0.6, max_len=25)
    for s in range(20):
        prompt, visual = random_instance(400 + s)
        trace = decode(backend, prompt, visual, cfg, job=s)
        for t, st in enumerate(trace.steps):
            assert st.t == t
            assert st.triggered == (st.forward_calls == 2) == bool(st.mask_indices)
            assert (st.candidate_count > 0) == st.triggered
        assert trace.total_forwards == trace.length + trace.triggered_count


def test_step_trace_rejects_inconsistency():
    with pytest.raises(ValueError):
        StepTrace(0, 1, 0.3, True, (), 0, 2)
    with pytest.raises(ValueError):
        StepTrace(0, 1, 0.3, False, (), 0, 2)


def test_step_trace_round_trip():
    st = StepTrace(3, 5, 0.123456789, True, (1, 4), 7, 2)
    assert StepTrace.from_dict(st.to_dict()) == st


def _trace(flags):
    return DecodeTrace([StepTrace(i, 1, 0.5, f, (0,) if f else (), 1 if f else 0, 2 if f else 1) for i, f in enumerate(flags)])


def test_efficiency_report_examples():
    r = efficiency_report(_trace([False] * 6))
    assert r["theta"] == 0 and r["total_forwards"] == 6 == r["L"]
    r = efficiency_report(_trace([True] * 6))
    assert r["theta"] == 1 and r["total_forwards"] == 12
    r = efficiency_report(_trace([True, False, False, True, False, False, True, False, False, False]))
    assert r["total_forwards"] == 13 and r["theta"] == pytest.approx(0.3)
    assert r["expected_forwards"] == pytest.approx(13)
    assert r["forwards_per_step"] == [2, 1, 1, 2, 1, 1, 2, 1, 1, 1]


def test_efficiency_report_empty():
    with pytest.raises(ValueError):
        efficiency_report(DecodeTrace())


def test_decode_empty_prompt(backend):
    _, visual = random_instance(0)
    with pytest.raises(ValueError):
        decode(backend, [], visual, DecoderConfig())


def test_calibrate_step_exposes_logits(backend):
    prompt, visual = random_instance(9)
    res = calibrate_step(backend, prompt, visual, DecoderConfig(tau=1.0), make_streams(0))
    assert res.trace.triggered
    assert np.isneginf(res.l_final).sum() == backend.vocab_size - res.trace.candidate_count
