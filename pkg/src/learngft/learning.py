"""Training the synthesis operator and the learnable graph topology.

Both trainers maximize mean SI-SDR.  Steps follow the gradient scaled so
that the largest single parameter change equals ``learning_rate``; a step is
kept only if it raises the objective, otherwise it is halved (at most
``max_halvings`` times).  Accepted objectives are therefore non-decreasing.

Topology gradients come from central finite differences, recomputing the
SVD basis for every probe, which limits topology training to N <= 64.
"""

from __future__ import annotations

import csv
import io
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .audio import FrameSequence
from .bases import GraphBasis, svd
from .enhancement import Pipeline, enhance_frames, frame_for, make_pipeline, reconstruct
from .errors import ConfigError, SingularSystemError
from .metrics import si_sdr, si_sdr_batch, si_sdr_gradient
from .topology import GraphTopology, LearnableTopology
from .transforms import SynthesisOperator, TimeGraphSpectrum

__all__ = [
    "TrainConfig",
    "TrainReport",
    "si_sdr",
    "si_sdr_gradient",
    "train_inverse",
    "train_topology",
    "train_decoder_on_masks",
    "fd_gradient",
    "directional_derivative_check",
    "TopologyObjective",
    "MAX_FD_VERTICES",
]

MAX_FD_VERTICES = 64


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.5
    max_iters: int = 20
    tolerance: float = 1e-4
    seed: int = 0
    fd_epsilon: float = 1e-4
    ridge: float = 1e-6
    line_search: bool = True
    max_halvings: int = 20

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")
        if self.max_iters < 1:
            raise ConfigError("max_iters must be at least 1")
        if not self.fd_epsilon > 0:
            raise ConfigError("fd_epsilon must be positive")
        if self.ridge < 0:
            raise ConfigError("ridge must be non-negative")
        if self.tolerance < 0:
            raise ConfigError("tolerance must be non-negative")


@dataclass
class TrainReport:
    objective_trace: list
    final_objective: float
    iterations: int
    wall_time: float
    initial_objective: float
    accepted: list = field(default_factory=list)
    row_sum_errors: list = field(default_factory=list)

    def to_dict(self, include_timing: bool = True) -> dict:
        d = asdict(self)
        if not include_timing:
            d.pop("wall_time")
        return d

    def to_json(self, include_timing: bool = True) -> str:
        return json.dumps(self.to_dict(include_timing), indent=1) + "\n"

    def trace_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("iteration", "objective_db", "accepted"))
        for i, (f, a) in enumerate(zip(self.objective_trace, self.accepted), start=1):
            w.writerow((i, repr(float(f)), int(a)))
        return buf.getvalue()


def _ascend(objective, gradient, x0, config: TrainConfig, on_step=None):
    """Normalized gradient ascent with halving backtracking."""
    start = time.perf_counter()
    x = np.array(x0, dtype=np.float64)
    f = objective(x)
    initial = f
    trace, accepted = [], []
    for _ in range(config.max_iters):
        g = gradient(x)
        gmax = np.max(np.abs(g)) if g.size else 0.0
        moved = False
        if gmax > 0:
            step = config.learning_rate / gmax
            halvings = config.max_halvings if config.line_search else 0
            for _ in range(halvings + 1):
                cand = x + step * g
                fc = objective(cand)
                if fc > f or not config.line_search:
                    moved = fc > f or not config.line_search
                    break
                step *= 0.5
        gain = fc - f if moved else 0.0
        if moved:
            x, f = cand, fc
        trace.append(f)
        accepted.append(bool(moved))
        if on_step is not None:
            on_step(len(trace), x, bool(moved))
        if not moved or gain < config.tolerance:
            break
    report = TrainReport(trace, f, len(trace), time.perf_counter() - start, initial, accepted)
    return x, report


# --------------------------------------------------------------------------
# synthesis operator


def _frame_rows(frames):
    if isinstance(frames, FrameSequence):
        return frames.frames
    return np.asarray(frames, dtype=np.float64)


def train_inverse(frames, basis: GraphBasis, config: TrainConfig | None = None,
                  method: str = "least-squares", inputs=None):
    """Fit a decoder ``B`` mapping spectra back to frames.

    ``inputs`` are the spectra to decode (default: the exact GFT-SVD of
    ``frames``); ``frames`` are the targets.  ``least-squares`` solves
    ``min_B sum ||B y - x||^2 + ridge ||B - psi||_F^2`` in closed form;
    ``gradient`` starts at ``B = psi`` and ascends mean per-frame SI-SDR.
    Returns ``(SynthesisOperator, TrainReport)``.
    """
    config = config or TrainConfig()
    x = _frame_rows(frames)
    if x.ndim != 2 or x.shape[0] < 1:
        raise ConfigError("train_inverse needs at least one training frame")
    n = basis.n
    if x.shape[1] != n:
        raise ConfigError(f"frames of width {x.shape[1]} do not match basis size {n}")
    if inputs is None:
        y = x @ basis.psi
    else:
        y = inputs.data if isinstance(inputs, TimeGraphSpectrum) else np.asarray(inputs, float)
        if y.shape != x.shape:
            raise ConfigError("inputs and target frames differ in shape")

    def mean_sisdr(b):
        return float(np.mean(si_sdr_batch(y @ b.T, x)))

    if method == "least-squares":
        start = time.perf_counter()
        gram = y.T @ y
        if config.ridge == 0 and np.linalg.matrix_rank(gram) < n:
            raise SingularSystemError(
                "training spectra do not span all directions; use ridge > 0"
            )
        lhs = gram + config.ridge * np.eye(n)
        rhs = x.T @ y + config.ridge * basis.psi
        # B lhs = rhs with lhs symmetric
        b = np.linalg.solve(lhs, rhs.T).T
        f = mean_sisdr(b)
        report = TrainReport([f], f, 1, time.perf_counter() - start,
                             mean_sisdr(basis.psi), [True])
    elif method == "gradient":
        def grad(b):
            g = si_sdr_gradient(y @ b.T, x)
            return g.T @ y / len(x)

        b, report = _ascend(mean_sisdr, grad, basis.psi, config)
    else:
        raise ConfigError(f"unknown training method {method!r}")
    return SynthesisOperator(b, basis.id), report


def train_decoder_on_masks(mixtures, pipeline: Pipeline, config: TrainConfig | None = None):
    """Least-squares decoder from oracle-masked noisy spectra to clean frames."""
    config = config or TrainConfig()
    ys, xs = [], []
    for clean, noisy in mixtures:
        cf, nf = frame_for(pipeline, clean), frame_for(pipeline, noisy)
        noisy_spec = pipeline.forward(nf)
        clean_spec = pipeline.forward(cf)
        mask = pipeline.mask(clean_spec, noisy_spec)
        ys.append(mask.data * noisy_spec.data)
        xs.append(cf.frames)
    y, x = np.vstack(ys), np.vstack(xs)
    op, _ = train_inverse(x, pipeline.basis, config, "least-squares", inputs=y)
    return op


# --------------------------------------------------------------------------
# finite differences


def fd_gradient(f, x, eps: float, jobs: int = 1) -> np.ndarray:
    """Central-difference gradient of scalar ``f`` at ``x`` (any shape)."""
    x = np.asarray(x, dtype=np.float64)
    flat = x.ravel()

    def probe(j):
        up, down = flat.copy(), flat.copy()
        up[j] += eps
        down[j] -= eps
        return (f(up.reshape(x.shape)) - f(down.reshape(x.shape))) / (2 * eps)

    if jobs > 1:
        with ThreadPoolExecutor(jobs) as pool:
            g = list(pool.map(probe, range(flat.size)))
    else:
        g = [probe(j) for j in range(flat.size)]
    return np.asarray(g).reshape(x.shape)


def directional_derivative_check(f, x, grad, direction, eps: float):
    """Compare ``<grad, d>`` with a two-point probe of ``f`` along unit ``d``.

    Returns ``(assembled, probed, relative_error)``.
    """
    d = np.asarray(direction, dtype=np.float64)
    d = d / np.linalg.norm(d)
    assembled = float(np.sum(grad * d))
    probed = (f(x + eps * d) - f(x - eps * d)) / (2 * eps)
    rel = abs(assembled - probed) / max(abs(probed), np.finfo(float).tiny)
    return assembled, probed, rel


# --------------------------------------------------------------------------
# topology


class TopologyObjective:
    """Mean enhanced SI-SDR of the oracle-mask GFT-SVD pipeline as a function of
    the edge logits.  Frames are computed once; each call rebuilds the basis."""

    def __init__(self, mixtures, base: GraphTopology, frame_len=None, hop=None,
                 window="sqrt-hann"):
        self.base = base
        n = base.n_vertices
        self.frame_len = n if frame_len is None else frame_len
        self.hop = max(1, self.frame_len // 4) if hop is None else hop
        self.window = window
        template = make_pipeline("gft-svd", n=n, topology=base,
                                 frame_len=self.frame_len, hop=self.hop, window=window)
        self._pairs = []
        for clean, noisy in mixtures:
            self._pairs.append((clean, frame_for(template, clean), frame_for(template, noisy)))
        if not self._pairs:
            raise ConfigError("topology training needs at least one mixture")

    def pipeline(self, topology: LearnableTopology) -> Pipeline:
        return Pipeline("gft-svd-learned", self.base.n_vertices, svd(topology.adjacency()),
                        topology=topology, frame_len=self.frame_len, hop=self.hop,
                        window=self.window)

    def evaluate_topology(self, topology: LearnableTopology) -> float:
        pipe = self.pipeline(topology)
        scores = []
        for clean, cf, nf in self._pairs:
            out = reconstruct(pipe, enhance_frames(pipe, cf, nf), len(clean))
            scores.append(si_sdr(out.samples, clean.samples))
        return float(np.mean(scores))

    def __call__(self, theta) -> float:
        return self.evaluate_topology(LearnableTopology(self.base, theta))


def _row_stochastic_error(topology: LearnableTopology):
    a = topology.adjacency()
    off = a[~topology.base.mask]
    return float(np.abs(a.sum(axis=1) - 1.0).max()), bool(np.all(off == 0.0))


def train_topology(mixtures, base: GraphTopology, config: TrainConfig | None = None,
                   frame_len=None, hop=None, jobs: int = 1, init: LearnableTopology | None = None,
                   callback=None):
    """Learn edge logits that maximize oracle-mask SI-SDR over ``mixtures``.

    ``mixtures`` are ``(clean, noisy)`` buffer pairs.  Training starts from
    uniform weights over each vertex's neighbors (the fixed topology) unless
    ``init`` is given.  After every iteration the adjacency is re-checked for
    row-stochasticity and ``callback(iteration, topology, accepted)`` is
    called.  Returns ``(LearnableTopology, TrainReport)``.
    """
    config = config or TrainConfig()
    if base.n_vertices > MAX_FD_VERTICES:
        raise ConfigError(
            f"finite-difference topology training supports N <= {MAX_FD_VERTICES}, "
            f"got {base.n_vertices}"
        )
    mixtures = list(mixtures)
    if not mixtures:
        raise ConfigError("topology training needs at least one mixture")
    objective = TopologyObjective(mixtures, base, frame_len, hop)
    theta0 = init.theta if init is not None else np.zeros(base.columns.shape)
    row_errors = []

    def on_step(iteration, theta, accepted):
        topo = LearnableTopology(base, theta)
        err, zero_off = _row_stochastic_error(topo)
        if err > 1e-12 or not zero_off:
            raise ConfigError(f"adjacency lost row-stochasticity at iteration {iteration}")
        row_errors.append(err)
        if callback is not None:
            callback(iteration, topo, accepted)

    on_step(0, theta0, True)
    theta, report = _ascend(
        objective, lambda t: fd_gradient(objective, t, config.fd_epsilon, jobs),
        theta0, config, on_step,
    )
    report.row_sum_errors = row_errors
    return LearnableTopology(base, theta), report
