import csv
import io
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from learngft.audio import AudioBuffer, mix_at_snr, synth_mixtures, synth_signal
from learngft.enhancement import (
    CSV_HEADER,
    MASK_EPS,
    Mask,
    Pipeline,
    apply_mask,
    compare_transforms,
    enhance,
    evaluate,
    frame_for,
    ideal_graph_mask,
    magnitude_mask,
    make_pipeline,
)
from learngft.errors import ConfigError
from learngft.metrics import si_sdr
from learngft.topology import LearnableTopology, build_shift_operator
from learngft.transforms import ComplexSpectrum, TimeGraphSpectrum

SMALL = dict(n=64, frame_len=64, hop=16)


@pytest.fixture(scope="module")
def mixture():
    clean = synth_signal("sine", 0.1, freq=700.0)
    noise = synth_signal("white-noise", 0.1, seed=5)
    return clean, mix_at_snr(clean, noise, 0.0)[0]


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**31), lo=st.floats(-20, -0.5), hi=st.floats(0.5, 20))
def test_graph_mask_matches_elementwise_oracle(seed, lo, hi):
    rng = np.random.default_rng(seed)
    s, x = rng.standard_normal((3, 6)), rng.standard_normal((3, 6))
    x[0, 0] = 0.0
    mask = ideal_graph_mask(TimeGraphSpectrum(s, "b"), TimeGraphSpectrum(x, "b"), (lo, hi))
    for (i, j), value in np.ndenumerate(mask.data):
        d = x[i, j] + MASK_EPS * (-1.0 if x[i, j] < 0 else 1.0)
        assert value == pytest.approx(min(max(s[i, j] / d, lo), hi), rel=1e-15)


def test_graph_mask_zero_noisy_coefficient_uses_positive_sign():
    clean = TimeGraphSpectrum([[1e-9, -1e-9]], "b")
    noisy = TimeGraphSpectrum([[0.0, 0.0]], "b")
    np.testing.assert_allclose(ideal_graph_mask(clean, noisy).data, [[0.1, -0.1]])


def test_magnitude_mask_and_phase():
    s = ComplexSpectrum([[1 + 1j, 0.5j]])
    x = ComplexSpectrum([[2.0, -1j]])
    mask = magnitude_mask(s, x)
    np.testing.assert_allclose(mask.data, [[np.sqrt(2) / (2 + MASK_EPS), 0.5 / (1 + MASK_EPS)]])
    out = apply_mask(mask, x)
    np.testing.assert_allclose(np.angle(out.data), np.angle(x.data))


def test_mask_validation():
    with pytest.raises(ConfigError):
        Mask([[11.0]])
    with pytest.raises(ConfigError):
        ideal_graph_mask(TimeGraphSpectrum([[1.0]], "a"), TimeGraphSpectrum([[1.0]], "b"))
    with pytest.raises(ConfigError):
        apply_mask(Mask([[1.0, 1.0]]), TimeGraphSpectrum([[1.0]], "a"))


def test_pipeline_validation():
    with pytest.raises(ConfigError):
        make_pipeline("wavelet", **SMALL)
    with pytest.raises(ConfigError):
        Pipeline("gft-svd", 64)
    with pytest.raises(ConfigError):
        make_pipeline("stft", n=64, frame_len=80, hop=16)


def test_padding_makes_every_sample_interior():
    pipe = make_pipeline("stft", **SMALL)
    for length in (64, 65, 100, 1600, 1601):
        buf = AudioBuffer(np.ones(length), 16000)
        frames = frame_for(pipe, buf)
        sl = frames.interior()
        head = pipe.frame_len - pipe.hop
        assert sl.start <= head and head + length <= sl.stop


@pytest.mark.parametrize("transform", ["stft", "gft-evd", "gft-svd", "gft-svd-learned"])
def test_zero_noise_is_reconstructed(transform):
    clean = synth_signal("chirp", 0.05, f0=200.0, f1=3000.0)
    pipe = make_pipeline(transform, k=3, **SMALL)
    out, report = enhance(clean, clean, pipe)
    err = np.linalg.norm(out.samples - clean.samples) / np.linalg.norm(clean.samples)
    assert err < 1e-6
    assert report.si_sdr_enhanced >= 100.0


@pytest.mark.parametrize("transform", ["stft", "gft-evd", "gft-svd"])
def test_oracle_mask_improves(mixture, transform):
    clean, noisy = mixture
    _, report = enhance(noisy, clean, make_pipeline(transform, k=3, **SMALL))
    assert report.si_sdr_improvement > 0
    assert report.si_sdr_improvement == pytest.approx(
        report.si_sdr_enhanced - report.si_sdr_noisy, abs=1e-12)
    assert report.si_sdr_noisy == pytest.approx(si_sdr(noisy.samples, clean.samples))


def test_evd_and_stft_pipelines_agree(mixture):
    # the eigenbasis is the DFT up to index reversal and magnitude masks ignore the ordering
    clean, noisy = mixture
    a, _ = enhance(noisy, clean, make_pipeline("stft", **SMALL))
    b, _ = enhance(noisy, clean, make_pipeline("gft-evd", k=3, **SMALL))
    np.testing.assert_allclose(a.samples, b.samples, atol=1e-10)


def test_learned_pipeline_at_zero_logits_equals_fixed(mixture):
    clean, noisy = mixture
    base = build_shift_operator(64, 3)
    fixed, _ = enhance(noisy, clean, make_pipeline("gft-svd", topology=base, **SMALL))
    learned, _ = enhance(noisy, clean,
                         make_pipeline("gft-svd-learned", topology=LearnableTopology(base), **SMALL))
    np.testing.assert_allclose(learned.samples, fixed.samples, atol=1e-9)


def test_enhance_length_mismatch(mixture):
    clean, noisy = mixture
    short = AudioBuffer(noisy.samples[:-1], noisy.sample_rate)
    with pytest.raises(ConfigError):
        enhance(short, clean, make_pipeline("stft", **SMALL))


def test_evaluate_identity():
    clean = synth_signal("sine", 0.1)
    noisy = mix_at_snr(clean, synth_signal("white-noise", 0.1), 5.0)[0]
    report = evaluate(clean, clean, noisy)
    assert report.si_sdr_noisy == pytest.approx(5.0, abs=0.5)
    assert report.si_sdr_improvement == pytest.approx(si_sdr(clean.samples, clean.samples)
                                                      - report.si_sdr_noisy)
    assert report.seg_snr_enhanced == 35.0
    assert report.num_frames == 3  # 1600 samples in 512-sample (32 ms) segments


def test_compare_transforms_grid():
    mixtures = synth_mixtures(2, 0.05, seed=3)
    sparsities = (0.05, 0.1, 0.5)
    table = compare_transforms(mixtures, sparsities, ("stft", "gft-svd"), **SMALL)
    rows = list(csv.reader(io.StringIO(table.to_csv())))
    assert tuple(rows[0]) == CSV_HEADER
    body = rows[1:]
    assert [r[0] for r in body] == ["stft"] * 3 + ["gft-svd"] * 3
    assert [r[1] for r in body] == ["0.05", "0.1", "0.5"] * 2
    assert [r[2] for r in body[3:]] == ["3", "6", "32"]
    # the STFT does not depend on the graph
    assert len({tuple(r[3:]) for r in body[:3]}) == 1
    doc = json.loads(table.to_json())
    assert len(doc) == 6 and len(doc[0]["per_mixture_improvement"]) == 2
    assert all(v > 0 for row in doc for v in row["per_mixture_improvement"])


def test_compare_transforms_parallel_matches_serial():
    mixtures = synth_mixtures(3, 0.05, seed=4)
    a = compare_transforms(mixtures, (0.1,), ("gft-svd",), jobs=1, **SMALL).to_csv()
    b = compare_transforms(mixtures, (0.1,), ("gft-svd",), jobs=3, **SMALL).to_csv()
    assert a == b


def test_compare_transforms_rejects_empty():
    with pytest.raises(ConfigError):
        compare_transforms([], (0.1,), **SMALL)
