import random

import numpy as np
import pytest
import torch

from cuemidi.boundaries import BoundaryState, step_inference_offset
from cuemidi.emotion import EmotionCondition
from cuemidi.errors import StallDetected
from cuemidi.model import ConditionalMusicTransformer, ModelConfig
from cuemidi.sampling import (GenerationRequest, SamplingParams, generate,
                              nucleus_sample, window_slide)
from cuemidi.tokenizer import VOCAB
from cuemidi.training import joy_condition


class TestNucleusSample:
    def test_p_one_takes_full_vocabulary(self):
        logits = np.linspace(-1, 1, 40)
        params = SamplingParams(nucleus_p=1.0)
        _, size = nucleus_sample(logits, params, random.Random(0))
        assert size == 40

    def test_degenerate_spike(self):
        logits = np.zeros(100)
        logits[17] = 1e9
        token, size = nucleus_sample(logits, SamplingParams(), random.Random(0))
        assert (token, size) == (17, 1)

    def test_nucleus_of_known_distribution(self):
        # softmax at temperature 1 of log-probabilities is the probabilities
        logits = np.log(np.array([0.5, 0.3, 0.2]))
        params = SamplingParams(nucleus_p=0.7, temperature=1.0)
        rng = random.Random(99)
        counts = [0, 0, 0]
        sizes = set()
        n = 20000
        for _ in range(n):
            token, size = nucleus_sample(logits, params, rng)
            counts[token] += 1
            sizes.add(size)
        assert sizes == {2}            # nucleus is {0, 1}
        assert counts[2] == 0          # never outside the nucleus
        assert counts[0] / n == pytest.approx(0.625, abs=0.02)

    def test_sampled_token_always_in_nucleus(self):
        rng = random.Random(5)
        sample_rng = random.Random(6)
        for _ in range(200):
            logits = np.array([rng.gauss(0, 3) for _ in range(30)])
            params = SamplingParams(nucleus_p=rng.uniform(0.05, 1.0),
                                    temperature=rng.uniform(0.5, 2.0))
            token, size = nucleus_sample(logits, params, sample_rng)
            order = np.argsort(-np.exp(logits / params.temperature), kind="stable")
            assert token in order[:size]

    def test_masked_logits_never_sampled(self):
        logits = np.zeros(10)
        logits[3] = -np.inf
        rng = random.Random(1)
        for _ in range(300):
            token, _ = nucleus_sample(logits, SamplingParams(nucleus_p=1.0), rng)
            assert token != 3

    def test_temperature_flattens(self):
        logits = np.array([2.0, 0.0])
        cold = SamplingParams(nucleus_p=1.0, temperature=0.25)
        hot = SamplingParams(nucleus_p=1.0, temperature=4.0)
        n = 5000
        cold_hits = sum(nucleus_sample(logits, cold, random.Random(i))[0] == 0
                        for i in range(n))
        hot_hits = sum(nucleus_sample(logits, hot, random.Random(i))[0] == 0
                       for i in range(n))
        assert cold_hits > hot_hits

    def test_params_validation(self):
        with pytest.raises(ValueError):
            SamplingParams(nucleus_p=0.0)
        with pytest.raises(ValueError):
            SamplingParams(temperature=0.0)


class TestWindowSlide:
    def test_short_identity(self):
        assert window_slide([1, 2], [0.1, 0.2], 5) == ([1, 2], [0.1, 0.2])

    def test_exact_overflow_drops_first(self):
        seq = list(range(7))
        offs = [float(i) for i in range(7)]
        w_seq, w_off = window_slide(seq, offs, 6)
        assert w_seq == seq[1:]
        assert w_off == offs[1:]

    def test_alignment_random_lengths(self):
        rng = random.Random(3)
        for _ in range(50):
            n = rng.randrange(1, 40)
            w = rng.randrange(1, 40)
            seq = [rng.randrange(1000) for _ in range(n)]
            offs = [float(t) for t in seq]
            w_seq, w_off = window_slide(seq, offs, w)
            assert len(w_seq) == len(w_off) == min(n, w)
            assert all(float(t) == o for t, o in zip(w_seq, w_off))


def tiny_model(variant="continuous_token", boundary=True, seed=0):
    cfg = ModelConfig(variant=variant, boundary_conditioning=boundary, seed=seed)
    return ConditionalMusicTransformer(cfg)


class TestGenerate:
    def request(self, duration=2.0, boundaries=(), seed=0, **kw):
        return GenerationRequest(duration_s=duration, boundaries=boundaries,
                                 condition=EmotionCondition(0.5, -0.5),
                                 params=SamplingParams(seed=seed), **kw)

    def test_terminates_past_duration(self):
        model = tiny_model()
        ids, offsets, report = generate(model, self.request(duration=0.001))
        assert report.final_cursor_s >= 0.001
        assert len(ids) == len(offsets) == report.token_count

    def test_empty_boundaries_all_offsets_capped(self):
        model = tiny_model()
        _, offsets, _ = generate(model, self.request(duration=1.0))
        assert all(o == model.cfg.max_offset_s for o in offsets)

    def test_deterministic_under_seed(self):
        model = tiny_model()
        a = generate(model, self.request(duration=1.5, boundaries=(0.5, 6.0), seed=7))
        b = generate(model, self.request(duration=1.5, boundaries=(0.5, 6.0), seed=7))
        assert a[0] == b[0]
        assert a[1] == b[1]
        assert a[2] == b[2]

    def test_offsets_replay_exactly(self):
        model = tiny_model()
        boundaries = (0.5, 2.0, 6.0)
        ids, offsets, _ = generate(model, self.request(duration=3.0,
                                                       boundaries=boundaries))
        state = BoundaryState(boundaries, sensitivity_s=1.0,
                              max_offset_s=model.cfg.max_offset_s)
        replayed = []
        for token in ids:
            off, state = step_inference_offset(state, token)
            replayed.append(off)
        assert replayed == offsets

    def test_primer_respected(self):
        model = tiny_model()
        primer = (VOCAB.bar,)
        ids, _, _ = generate(model, self.request(duration=0.5, primer=primer))
        assert ids[0] == VOCAB.bar

    def test_default_primer_start_bar(self):
        model = tiny_model()
        ids, _, _ = generate(model, self.request(duration=0.2))
        assert ids[:2] == [VOCAB.start, VOCAB.bar]

    def test_pad_never_sampled(self):
        model = tiny_model()
        with torch.no_grad():
            model.head.bias[VOCAB.pad] = 50.0  # make PAD overwhelmingly likely
        ids, _, _ = generate(model, self.request(duration=0.5))
        assert VOCAB.pad not in ids

    def test_stall_detected(self):
        model = tiny_model(boundary=False)
        with torch.no_grad():
            model.head.bias.fill_(-10.0)
            model.head.bias[VOCAB.note_on("piano", 60)] = 100.0
        with pytest.raises(StallDetected):
            generate(model, self.request(duration=5.0), stall_limit=64)

    def test_bump_counted_for_tiny_nuclei(self):
        model = tiny_model(boundary=False)
        with torch.no_grad():
            model.head.bias.fill_(-10.0)
            model.head.bias[VOCAB.shift(1000)] = 100.0  # always one shift token
        ids, _, report = generate(model, self.request(duration=3.0))
        # nucleus size is 1 from the first sampled step onward
        assert report.bumped_steps == report.token_count - 3

    def test_consumption_reported(self, pipeline_model):
        v, a = joy_condition()
        req = GenerationRequest(duration_s=8.0, boundaries=(3.0,),
                                condition=EmotionCondition(v, a),
                                params=SamplingParams(seed=11))
        ids, _, report = generate(pipeline_model, req)
        assert report.boundaries_consumed == (3.0,)
        assert report.chord_times_s  # the loop corpus emits chords
        assert any(abs(t - 3.0) < 1.0 for t in report.chord_times_s)

    def test_window_slide_used_for_long_generations(self):
        model = tiny_model(variant="vanilla", boundary=False)
        req = GenerationRequest(duration_s=1.0,
                                params=SamplingParams(seed=3, context_window=8))
        ids, _, _ = generate(model, req)
        assert len(ids) > 0  # bounded context still terminates

    def test_request_validation(self):
        with pytest.raises(ValueError):
            GenerationRequest(duration_s=0.0)
        with pytest.raises(ValueError):
            GenerationRequest(duration_s=1.0, boundaries=(2.0, 1.0))
