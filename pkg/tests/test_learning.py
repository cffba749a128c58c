import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from learngft.audio import synth_mixtures, synth_signal
from learngft.bases import svd
from learngft.enhancement import enhance, make_pipeline
from learngft.errors import ConfigError, SingularSystemError
from learngft.learning import (
    TopologyObjective,
    TrainConfig,
    _ascend,
    directional_derivative_check,
    fd_gradient,
    train_decoder_on_masks,
    train_inverse,
    train_topology,
)
from learngft.metrics import si_sdr, si_sdr_gradient
from learngft.topology import build_shift_operator, fixed_adjacency, init_learnable


@pytest.fixture(scope="module")
def basis16():
    return svd(fixed_adjacency(build_shift_operator(16, 2)))


@pytest.mark.parametrize("kwargs", [
    {"learning_rate": 0}, {"max_iters": 0}, {"fd_epsilon": 0}, {"ridge": -1}, {"tolerance": -1},
])
def test_train_config_validation(kwargs):
    with pytest.raises(ConfigError):
        TrainConfig(**kwargs)


def test_least_squares_recovers_psi_with_full_span(basis16):
    x = np.random.default_rng(0).standard_normal((200, 16))
    op, report = train_inverse(x, basis16, TrainConfig(ridge=0.0))
    assert np.abs(op.b - basis16.psi).max() < 1e-8
    assert op.basis_id == basis16.id
    assert report.iterations == 1 and report.final_objective > 100


def test_least_squares_matches_lstsq_oracle(basis16):
    rng = np.random.default_rng(1)
    x = rng.standard_normal((120, 16))
    y = x @ basis16.psi + 0.3 * rng.standard_normal((120, 16))
    op, _ = train_inverse(x, basis16, TrainConfig(ridge=0.0), inputs=y)
    oracle = np.linalg.lstsq(y, x, rcond=None)[0].T
    np.testing.assert_allclose(op.b, oracle, atol=1e-10)


def test_ridge_pulls_towards_psi(basis16):
    rng = np.random.default_rng(2)
    x = rng.standard_normal((30, 16))
    y = rng.standard_normal((30, 16))
    heavy, _ = train_inverse(x, basis16, TrainConfig(ridge=1e6), inputs=y)
    assert np.abs(heavy.b - basis16.psi).max() < 1e-3


def test_rank_deficient_without_ridge_raises(basis16):
    x = np.random.default_rng(3).standard_normal((5, 16))
    with pytest.raises(SingularSystemError):
        train_inverse(x, basis16, TrainConfig(ridge=0.0))
    op, _ = train_inverse(x, basis16, TrainConfig(ridge=1e-6))
    assert np.all(np.isfinite(op.b))


def test_train_inverse_validation(basis16):
    with pytest.raises(ConfigError):
        train_inverse(np.ones((4, 8)), basis16)
    with pytest.raises(ConfigError):
        train_inverse(np.ones((4, 16)), basis16, method="adam")
    with pytest.raises(ConfigError):
        train_inverse(np.ones((4, 16)), basis16, inputs=np.ones((3, 16)))


def test_gradient_training_is_monotone_and_near_least_squares(basis16):
    rng = np.random.default_rng(4)
    x = rng.standard_normal((300, 16))
    y = x @ basis16.psi + 0.05 * rng.standard_normal((300, 16))
    ls, ls_report = train_inverse(x, basis16, TrainConfig(), inputs=y)
    gd, gd_report = train_inverse(x, basis16, TrainConfig(learning_rate=0.05, max_iters=60),
                                  "gradient", inputs=y)
    trace = np.array(gd_report.objective_trace)
    assert np.all(np.diff(trace) >= 0)
    assert trace[-1] >= gd_report.initial_objective
    assert gd_report.final_objective >= ls_report.final_objective - 1.0
    assert len(gd_report.accepted) == gd_report.iterations == len(trace)


def test_ascend_on_concave_quadratic():
    target = np.array([1.0, -2.0, 0.5])
    f = lambda x: -float(np.sum((x - target) ** 2))  # noqa: E731
    g = lambda x: -2 * (x - target)  # noqa: E731
    x, report = _ascend(f, g, np.zeros(3), TrainConfig(learning_rate=1.0, max_iters=200,
                                                      tolerance=1e-14))
    assert np.abs(x - target).max() < 1e-5
    assert np.all(np.diff(report.objective_trace) >= 0)


def test_ascend_stops_when_no_step_improves():
    f = lambda x: 0.0  # noqa: E731
    g = lambda x: np.ones_like(x)  # noqa: E731
    _, report = _ascend(f, g, np.zeros(2), TrainConfig(max_iters=10))
    assert report.iterations == 1 and report.accepted == [False]
    assert report.final_objective == report.initial_objective


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31), n=st.integers(1, 8))
def test_fd_gradient_of_cubic(seed, n):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal(n)
    x = rng.standard_normal(n)
    f = lambda z: float(np.sum(a * z**3))  # noqa: E731
    np.testing.assert_allclose(fd_gradient(f, x, 1e-5), 3 * a * x**2, atol=1e-6)


def test_fd_gradient_parallel_matches_serial():
    f = lambda z: float(np.sin(z).sum() * np.cos(z[0, 0]))  # noqa: E731
    x = np.random.default_rng(0).standard_normal((3, 4))
    np.testing.assert_array_equal(fd_gradient(f, x, 1e-4, jobs=1), fd_gradient(f, x, 1e-4, jobs=4))


def test_directional_check_on_si_sdr():
    rng = np.random.default_rng(5)
    ref, est = rng.standard_normal(40), rng.standard_normal(40)
    f = lambda z: si_sdr(z, ref)  # noqa: E731
    _, _, rel = directional_derivative_check(f, est, si_sdr_gradient(est, ref),
                                             rng.standard_normal(40), 1e-6)
    assert rel < 1e-6


def test_report_serialization(basis16):
    x = np.random.default_rng(6).standard_normal((40, 16))
    _, report = train_inverse(x, basis16, TrainConfig(max_iters=3), "gradient")
    doc = json.loads(report.to_json(include_timing=False))
    assert "wall_time" not in doc and doc["iterations"] == report.iterations
    assert "wall_time" in report.to_dict()
    lines = report.trace_csv().splitlines()
    assert lines[0] == "iteration,objective_db,accepted"
    assert len(lines) == report.iterations + 1


def test_decoder_on_masks_is_bound_to_basis():
    mixtures = synth_mixtures(3, 0.05, seed=9)
    pipe = make_pipeline("gft-svd", n=32, k=2, frame_len=32, hop=8)
    op = train_decoder_on_masks(mixtures, pipe, TrainConfig())
    assert op.basis_id == pipe.basis.id and op.n == 32


# -- topology training ------------------------------------------------------


def test_train_topology_guards():
    mixtures = synth_mixtures(1, 0.02, seed=0)
    with pytest.raises(ConfigError):
        train_topology(mixtures, build_shift_operator(128, 2))
    with pytest.raises(ConfigError):
        train_topology([], build_shift_operator(16, 2))


def test_small_topology_run_is_monotone_and_stochastic():
    mixtures = synth_mixtures(2, 0.03, seed=1)
    base = build_shift_operator(16, 2)
    seen = []
    topo, report = train_topology(mixtures, base, TrainConfig(max_iters=3), frame_len=16, hop=4,
                                  callback=lambda i, t, ok: seen.append((i, ok)))
    trace = [report.initial_objective] + report.objective_trace
    assert np.all(np.diff(trace) >= 0)
    assert report.final_objective >= report.initial_objective
    assert [i for i, _ in seen] == list(range(report.iterations + 1))
    assert max(report.row_sum_errors) <= 1e-12
    a = topo.adjacency()
    assert np.all(a[~base.mask] == 0)
    # the returned topology scores the reported final objective
    objective = TopologyObjective(mixtures, base, 16, 4)
    assert objective(topo.theta) == pytest.approx(report.final_objective, abs=1e-9)


def test_zero_noise_training_stops_on_tolerance():
    clean = synth_signal("sine", 0.03, freq=500.0)
    base = build_shift_operator(16, 2)
    _, report = train_topology([(clean, clean)], base, TrainConfig(max_iters=5),
                               frame_len=16, hop=4)
    assert report.iterations == 1
    assert report.initial_objective > 100


def test_objective_is_mean_of_per_mixture_si_sdr():
    mixtures = synth_mixtures(2, 0.03, seed=2)
    base = build_shift_operator(16, 2)
    objective = TopologyObjective(mixtures, base, 16, 4)
    pipe = make_pipeline("gft-svd", n=16, topology=base, frame_len=16, hop=4)
    scores = [enhance(noisy, clean, pipe)[1].si_sdr_enhanced for clean, noisy in mixtures]
    assert objective(np.zeros((16, 2))) == pytest.approx(np.mean(scores), abs=1e-9)


def test_topology_gradient_directional_self_check():
    # away from the degenerate circulant start the objective is smooth on small scales
    mixtures = synth_mixtures(2, 0.1, seed=0)
    base = build_shift_operator(16, 2)
    objective = TopologyObjective(mixtures, base, 16, 4)
    theta = init_learnable(base, "seeded-uniform", seed=3, scale=0.5).theta
    grad = fd_gradient(objective, theta, 1e-6)
    direction = np.random.default_rng(1).standard_normal(theta.shape)
    _, _, rel = directional_derivative_check(objective, theta, grad, direction, 1e-6)
    assert rel < 1e-3
