import json

import numpy as np
import pytest

from cuemidi.audio import read_wav
from cuemidi.boundaries import filter_min_gap
from cuemidi.errors import BadSeries, CheckpointError, InputError
from cuemidi.midi_io import parse_midi
from cuemidi.pipeline import (PipelineConfig, SceneCutSeries, config_from_mapping,
                              cuts_from_series, parse_config_file,
                              parse_scene_file, resolve_condition, run_pipeline,
                              scene_boundaries)

JOY = "anger 0\ndisgust 0\nfear 0\njoy 1\nsadness 0\nsurprise 0\n"


@pytest.fixture
def joy_file(tmp_path):
    path = tmp_path / "emotions.txt"
    path.write_text(JOY)
    return path


@pytest.fixture
def scenes_file(tmp_path):
    path = tmp_path / "scenes.txt"
    path.write_text("5.0\n12.0\n20.0\n")
    return path


class TestSceneCuts:
    def test_all_zero_series(self):
        assert cuts_from_series([0.0] * 100, 30.0) == []

    def test_single_spike(self):
        values = [0.0] * 31
        values[30] = 0.5
        assert cuts_from_series(values, 30.0) == [1.0]

    def test_threshold_strict(self):
        values = [0.27, 0.2701]
        assert cuts_from_series(values, 1.0) == [1.0]

    def test_rejects_out_of_range(self):
        with pytest.raises(BadSeries):
            cuts_from_series([0.5, 1.2], 30.0)
        with pytest.raises(BadSeries):
            cuts_from_series([0.5], 0.0)

    def test_parse_timestamp_form(self):
        series = parse_scene_file("# cuts\n1.5\n8.25\n")
        assert series.timestamps == (1.5, 8.25)

    def test_parse_difference_form(self):
        series = parse_scene_file("fps 30\n0.0\n0.9\n0.1\n")
        assert series.fps == 30.0
        assert series.differences == (0.0, 0.9, 0.1)

    def test_parse_bad_file(self):
        with pytest.raises(InputError):
            parse_scene_file("not a number\n")

    def test_series_validation(self):
        with pytest.raises(ValueError):
            SceneCutSeries()
        with pytest.raises(ValueError):
            SceneCutSeries(differences=(0.1,), fps=0.0)

    def test_boundaries_filtered(self):
        series = SceneCutSeries(timestamps=(1.0, 3.0, 6.0))
        assert scene_boundaries(series, 0.27, 4.0) == (1.0, 6.0)

    def test_difference_form_end_to_end(self):
        values = [0.0] * 200
        values[30] = 0.5   # 1.0 s
        values[60] = 0.9   # 2.0 s, dropped by the 4 s gap filter
        values[180] = 0.8  # 6.0 s
        series = SceneCutSeries(differences=tuple(values), fps=30.0)
        assert scene_boundaries(series, 0.27, 4.0) == (1.0, 6.0)
        assert filter_min_gap(cuts_from_series(values, 30.0), 4.0) == [1.0, 6.0]


class TestConfig:
    def test_parse_and_merge(self):
        text = """
        # comment
        threshold = 0.3
        min_gap_s = 2.0
        temperature = 0.9
        seed = 5
        synth_cmd = fluidsynth -ni {midi} -F {wav}
        """
        values = parse_config_file(text)
        cfg = config_from_mapping(values)
        assert cfg.threshold == 0.3
        assert cfg.min_gap_s == 2.0
        assert cfg.sampling.temperature == 0.9
        assert cfg.sampling.seed == 5
        assert "{midi}" in cfg.synth_cmd

    def test_unknown_key(self):
        with pytest.raises(InputError):
            parse_config_file("wibble = 3\n")

    def test_bad_line(self):
        with pytest.raises(InputError):
            parse_config_file("threshold 0.3\n")

    def test_validation(self):
        with pytest.raises(ValueError):
            PipelineConfig(threshold=1.5)
        with pytest.raises(ValueError):
            PipelineConfig(fade_out_s=-1.0)


class TestResolveCondition:
    def test_overrides_win(self, joy_file):
        cond = resolve_condition(PipelineConfig(), joy_file, valence=-0.5)
        assert cond.valence == -0.5
        assert cond.arousal is None

    def test_file_mapping(self, joy_file):
        cond = resolve_condition(PipelineConfig(), joy_file)
        assert cond.valence == pytest.approx(0.8)
        assert cond.arousal == pytest.approx(0.4766, abs=1e-4)

    def test_no_inputs_absent(self):
        cond = resolve_condition(PipelineConfig(), None)
        assert cond.valence is None and cond.arousal is None

    def test_bad_override(self):
        with pytest.raises(InputError):
            resolve_condition(PipelineConfig(), None, valence=2.0)

    def test_missing_file(self, tmp_path):
        with pytest.raises(InputError):
            resolve_condition(PipelineConfig(), tmp_path / "absent.txt")


class TestRunPipeline:
    def cfg(self, checkpoint, **kw):
        return PipelineConfig(checkpoint=str(checkpoint), **kw)

    def test_end_to_end(self, pipeline_checkpoint, joy_file, scenes_file, tmp_path):
        out = tmp_path / "out.mid"
        midi_path, report = run_pipeline(self.cfg(pipeline_checkpoint), joy_file,
                                         scenes_file, 12.0, out, seed=3)
        nl = parse_midi(out.read_bytes())
        assert len(nl) > 0
        assert max(n.offset_s for n in nl) >= 12.0
        assert report.valence == pytest.approx(0.8)
        assert report.arousal == pytest.approx(0.4766, abs=1e-4)
        assert report.input_boundaries == (5.0, 12.0, 20.0)
        assert report.n_consumed_boundaries >= 1
        assert report.duration_s >= 12.0
        assert report.token_count > 0

    def test_deterministic_bytes_and_report(self, pipeline_checkpoint, joy_file,
                                            scenes_file, tmp_path):
        outs, reports = [], []
        for name in ("a.mid", "b.mid"):
            out = tmp_path / name
            _, report = run_pipeline(self.cfg(pipeline_checkpoint), joy_file,
                                     scenes_file, 6.0, out, seed=42)
            outs.append(out.read_bytes())
            reports.append(report)
        assert outs[0] == outs[1]
        a, b = reports
        assert (a.valence, a.arousal, a.input_boundaries, a.consumed_boundaries,
                a.token_count, a.duration_s, a.chord_times_s) == \
               (b.valence, b.arousal, b.input_boundaries, b.consumed_boundaries,
                b.token_count, b.duration_s, b.chord_times_s)

    def test_consumed_boundaries_have_nearby_chords(self, pipeline_checkpoint,
                                                    joy_file, scenes_file, tmp_path):
        cfg = self.cfg(pipeline_checkpoint)
        _, report = run_pipeline(cfg, joy_file, scenes_file, 12.0,
                                 tmp_path / "c.mid", seed=3)
        for boundary in report.consumed_boundaries:
            assert any(abs(t - boundary) < cfg.sensitivity_s
                       for t in report.chord_times_s)

    def test_zero_duration_rejected(self, pipeline_checkpoint, joy_file, tmp_path):
        with pytest.raises(InputError):
            run_pipeline(self.cfg(pipeline_checkpoint), joy_file, None, 0.0,
                         tmp_path / "x.mid")

    def test_without_scenes_or_emotions(self, pipeline_checkpoint, tmp_path):
        _, report = run_pipeline(self.cfg(pipeline_checkpoint), None, None, 3.0,
                                 tmp_path / "x.mid", seed=1)
        assert report.valence is None
        assert report.input_boundaries == ()

    def test_bad_checkpoint(self, joy_file, tmp_path):
        bad = tmp_path / "bad.ckpt"
        bad.write_bytes(b"junk")
        with pytest.raises(CheckpointError):
            run_pipeline(self.cfg(bad), joy_file, None, 2.0, tmp_path / "x.mid")

    def test_report_json(self, pipeline_checkpoint, joy_file, tmp_path):
        _, report = run_pipeline(self.cfg(pipeline_checkpoint), joy_file, None,
                                 2.0, tmp_path / "x.mid", seed=1)
        d = json.loads(report.to_json())
        assert d["n_input_boundaries"] == 0
        assert d["valence"] == pytest.approx(0.8)

    def test_synthesizer_subprocess(self, pipeline_checkpoint, joy_file, tmp_path):
        # stand-in synthesizer: reads the MIDI, writes a constant-amplitude WAV
        script = tmp_path / "synth.py"
        script.write_text(
            "import sys\n"
            "import numpy as np\n"
            "from cuemidi.audio import WavData, write_wav\n"
            "from cuemidi.midi_io import parse_midi\n"
            "nl = parse_midi(open(sys.argv[1], 'rb').read())\n"
            "n = int(max(n.offset_s for n in nl) * 1000)\n"
            "w = WavData(1000, 'pcm16', 0.5 * np.ones((n, 1)))\n"
            "open(sys.argv[2], 'wb').write(write_wav(w))\n")
        cfg = self.cfg(pipeline_checkpoint,
                       synth_cmd=f"python3 {script} {{midi}} {{wav}}")
        _, report = run_pipeline(cfg, joy_file, None, 3.0, tmp_path / "s.mid", seed=2)
        assert report.wav_path is not None
        wav = read_wav((tmp_path / "s.wav").read_bytes())
        peak = float(np.max(np.abs(wav.samples)))
        assert peak == pytest.approx(10 ** (-3 / 20), abs=1e-3)
        assert wav.samples[-1, 0] == 0.0

    def test_failing_synthesizer(self, pipeline_checkpoint, joy_file, tmp_path):
        cfg = self.cfg(pipeline_checkpoint, synth_cmd="false {midi} {wav}")
        with pytest.raises(InputError):
            run_pipeline(cfg, joy_file, None, 2.0, tmp_path / "f.mid", seed=2)
