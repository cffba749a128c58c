import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from learngft.bases import circulant_evd, svd
from learngft.errors import BasisMismatchError, ConfigError
from learngft.topology import build_shift_operator, fixed_adjacency, init_learnable
from learngft.transforms import (
    SynthesisOperator,
    TimeGraphSpectrum,
    evd_to_dft_order,
    gft_evd_forward,
    gft_evd_inverse,
    gft_svd_forward,
    gft_svd_inverse,
    learned_inverse_apply,
    load_operator,
    load_spectrum,
    save_operator,
    save_spectrum,
    stft_forward,
    stft_inverse,
    write_spectrum_csv,
)

_BASES = {}


def graph_bases(n, k):
    key = (n, k)
    if key not in _BASES:
        base = build_shift_operator(n, k)
        _BASES[key] = (svd(fixed_adjacency(base)), circulant_evd(base))
    return _BASES[key]


frames_strategy = st.tuples(st.sampled_from([(8, 1), (8, 3), (16, 2), (32, 3)]),
                            st.integers(1, 12), st.integers(0, 2**31))


@settings(max_examples=40, deadline=None)
@given(args=frames_strategy)
def test_round_trips(args):
    (n, k), count, seed = args
    x = np.random.default_rng(seed).standard_normal((count, n))
    sb, eb = graph_bases(n, k)
    # Jacobi stops at 1e-12 column orthogonality, so psi is orthogonal to about that level
    assert np.abs(gft_svd_inverse(gft_svd_forward(x, sb), sb) - x).max() < 1e-10
    assert np.abs(gft_evd_inverse(gft_evd_forward(x, eb), eb) - x).max() < 1e-12
    assert np.abs(stft_inverse(stft_forward(x)) - x).max() < 1e-12


@settings(max_examples=30, deadline=None)
@given(args=frames_strategy)
def test_energy_preserved(args):
    (n, k), count, seed = args
    x = np.random.default_rng(seed).standard_normal((count, n))
    sb, eb = graph_bases(n, k)
    energy = np.sum(x * x)
    assert np.sum(gft_svd_forward(x, sb).data ** 2) == pytest.approx(energy, rel=1e-12)
    assert np.sum(np.abs(gft_evd_forward(x, eb).data) ** 2) == pytest.approx(energy, rel=1e-12)
    assert np.sum(np.abs(stft_forward(x).data) ** 2) == pytest.approx(energy, rel=1e-12)


@pytest.mark.parametrize("n,k", [(8, 1), (8, 3), (64, 5)])
def test_evd_spectrum_is_index_reversed_stft(n, k):
    x = np.random.default_rng(n).standard_normal((5, n))
    _, eb = graph_bases(n, k)
    evd = gft_evd_forward(x, eb).data
    dft = stft_forward(x).data
    np.testing.assert_allclose(evd, dft[:, evd_to_dft_order(n)], atol=1e-12)
    np.testing.assert_allclose(dft, np.fft.fft(x, axis=1) / np.sqrt(n), atol=1e-12)


def test_svd_spectrum_is_real_and_tagged():
    sb, _ = graph_bases(16, 2)
    spec = gft_svd_forward(np.ones(16), sb)
    assert spec.shape == (1, 16) and spec.data.dtype == np.float64
    assert spec.basis_id == sb.id


def test_basis_mismatch_is_rejected():
    sb, eb = graph_bases(8, 1)
    other, _ = graph_bases(8, 3)
    spec = gft_svd_forward(np.ones((2, 8)), sb)
    with pytest.raises(BasisMismatchError):
        gft_svd_inverse(spec, other)
    with pytest.raises(BasisMismatchError):
        learned_inverse_apply(SynthesisOperator.from_basis(other), spec)
    with pytest.raises(BasisMismatchError):
        stft_inverse(gft_evd_forward(np.ones((2, 8)), eb))


def test_width_mismatch_is_rejected():
    sb, _ = graph_bases(8, 1)
    with pytest.raises(ConfigError):
        gft_svd_forward(np.ones((3, 9)), sb)
    with pytest.raises(ConfigError):
        TimeGraphSpectrum(np.ones(4), sb.id)
    with pytest.raises(ConfigError):
        TimeGraphSpectrum(np.full((1, 4), np.inf), sb.id)


def test_learned_inverse_with_psi_equals_exact_inverse():
    base = build_shift_operator(16, 4)
    basis = svd(init_learnable(base, "seeded-uniform", seed=1, scale=1.0).adjacency())
    spec = gft_svd_forward(np.random.default_rng(0).standard_normal((7, 16)), basis)
    op = SynthesisOperator.from_basis(basis)
    np.testing.assert_array_equal(learned_inverse_apply(op, spec), gft_svd_inverse(spec, basis))


def test_dumps_round_trip(tmp_path):
    sb, _ = graph_bases(8, 3)
    spec = gft_svd_forward(np.random.default_rng(4).standard_normal((3, 8)), sb)
    save_spectrum(tmp_path / "s.bin", spec)
    back = load_spectrum(tmp_path / "s.bin")
    np.testing.assert_array_equal(back.data, spec.data)
    assert back.basis_id == spec.basis_id

    write_spectrum_csv(tmp_path / "s.csv", spec)
    parsed = np.loadtxt(tmp_path / "s.csv", delimiter=",", ndmin=2)
    np.testing.assert_allclose(parsed, spec.data, rtol=1e-11, atol=1e-15)

    op = SynthesisOperator(np.random.default_rng(5).standard_normal((8, 8)), sb.id)
    save_operator(tmp_path / "o.bin", op)
    back = load_operator(tmp_path / "o.bin")
    np.testing.assert_array_equal(back.b, op.b)
    assert back.basis_id == op.basis_id


def test_dumps_reject_garbage(tmp_path):
    (tmp_path / "x.bin").write_bytes(b"LGFTSPC1" + b"\x00" * 4)
    with pytest.raises(ConfigError):
        load_spectrum(tmp_path / "x.bin")
    with pytest.raises(ConfigError):
        load_operator(tmp_path / "x.bin")
    with pytest.raises(ConfigError):
        SynthesisOperator(np.ones((2, 3)), "x")
