"""Oracle-mask enhancement: frame, transform, mask, invert, overlap-add, score.

The mask is the ideal ratio of clean to noisy coefficients, so it measures
how well a representation separates speech from noise rather than how well
a network estimates masks.  Real (GFT-SVD) spectra use a signed ratio; the
complex baselines use a magnitude ratio and keep the noisy phase.
"""

from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .audio import AudioBuffer, FrameSequence, frame_signal, overlap_add
from .bases import EvdBasis, GraphBasis, circulant_evd, svd
from .errors import ConfigError
from .metrics import seg_count, seg_snr, si_sdr
from .topology import (
    GraphTopology,
    LearnableTopology,
    build_shift_operator,
    fixed_adjacency,
    sparsity_to_k,
)
from .transforms import (
    ComplexSpectrum,
    SynthesisOperator,
    TimeGraphSpectrum,
    gft_evd_forward,
    gft_evd_inverse,
    gft_svd_forward,
    gft_svd_inverse,
    learned_inverse_apply,
    stft_forward,
    stft_inverse,
)

__all__ = [
    "Mask",
    "MetricsReport",
    "Pipeline",
    "ReportRow",
    "ReportTable",
    "TRANSFORMS",
    "MASK_EPS",
    "ideal_graph_mask",
    "magnitude_mask",
    "apply_mask",
    "make_pipeline",
    "enhance",
    "enhance_frames",
    "frame_for",
    "reconstruct",
    "evaluate",
    "compare_transforms",
]

MASK_EPS = 1e-8
DEFAULT_CLAMP = (-10.0, 10.0)
TRANSFORMS = ("stft", "gft-evd", "gft-svd", "gft-svd-learned")


@dataclass(frozen=True, eq=False)
class Mask:
    data: np.ndarray
    clamp_lo: float = DEFAULT_CLAMP[0]
    clamp_hi: float = DEFAULT_CLAMP[1]

    def __post_init__(self):
        d = np.array(self.data, dtype=np.float64)
        if not np.all(np.isfinite(d)):
            raise ConfigError("mask must be finite")
        if d.size and (d.min() < self.clamp_lo or d.max() > self.clamp_hi):
            raise ConfigError("mask entries fall outside the clamp range")
        d.setflags(write=False)
        object.__setattr__(self, "data", d)


@dataclass(frozen=True)
class MetricsReport:
    si_sdr_noisy: float
    si_sdr_enhanced: float
    si_sdr_improvement: float
    seg_snr_enhanced: float
    num_frames: int

    def to_dict(self):
        return asdict(self)


def _same_geometry(a, b):
    if a.shape != b.shape:
        raise ConfigError(f"spectra shapes differ: {a.shape} vs {b.shape}")
    if a.basis_id != b.basis_id:
        raise ConfigError(f"spectra come from different bases: {a.basis_id} vs {b.basis_id}")


def ideal_graph_mask(clean_spec: TimeGraphSpectrum, noisy_spec: TimeGraphSpectrum,
                     clamp=DEFAULT_CLAMP) -> Mask:
    """Signed ratio mask ``S / (X + eps*sgn(X))`` clamped to ``clamp``; sgn(0) = +1."""
    _same_geometry(clean_spec, noisy_spec)
    x = noisy_spec.data
    sgn = np.where(x < 0, -1.0, 1.0)
    ratio = clean_spec.data / (x + MASK_EPS * sgn)
    lo, hi = clamp
    return Mask(np.clip(ratio, lo, hi), lo, hi)


def magnitude_mask(clean_spec: ComplexSpectrum, noisy_spec: ComplexSpectrum,
                   clamp=DEFAULT_CLAMP) -> Mask:
    """Magnitude ratio ``|S| / (|X| + eps)`` for complex spectra."""
    _same_geometry(clean_spec, noisy_spec)
    ratio = np.abs(clean_spec.data) / (np.abs(noisy_spec.data) + MASK_EPS)
    lo, hi = clamp
    return Mask(np.clip(ratio, lo, hi), lo, hi)


def apply_mask(mask: Mask, noisy_spec):
    """Elementwise product; the spectrum type and basis binding are preserved."""
    if mask.data.shape != noisy_spec.shape:
        raise ConfigError(f"mask {mask.data.shape} does not match spectrum {noisy_spec.shape}")
    return noisy_spec.with_data(mask.data * noisy_spec.data)


# --------------------------------------------------------------------------
# pipelines


@dataclass(frozen=True, eq=False)
class Pipeline:
    """One analysis/synthesis configuration.

    ``basis`` is a :class:`GraphBasis` for the SVD transforms, an
    :class:`EvdBasis` for ``gft-evd`` and ``None`` for ``stft``.
    ``synthesis`` is ``None`` for the exact inverse or a learned
    :class:`SynthesisOperator` (SVD transforms only).
    """

    transform: str
    n: int = 512
    basis: GraphBasis | EvdBasis | None = None
    synthesis: SynthesisOperator | None = None
    topology: GraphTopology | LearnableTopology | None = None
    frame_len: int = 400
    hop: int = 100
    window: str = "sqrt-hann"
    clamp: tuple = DEFAULT_CLAMP

    def __post_init__(self):
        if self.transform not in TRANSFORMS:
            raise ConfigError(f"unknown transform {self.transform!r}; choose from {TRANSFORMS}")
        svd_like = self.transform in ("gft-svd", "gft-svd-learned")
        if svd_like and not isinstance(self.basis, GraphBasis):
            raise ConfigError(f"{self.transform} needs a GraphBasis")
        if self.transform == "gft-evd" and not isinstance(self.basis, EvdBasis):
            raise ConfigError("gft-evd needs an EvdBasis")
        if self.basis is not None and self.basis.n != self.n:
            raise ConfigError(f"basis size {self.basis.n} does not match n={self.n}")
        if self.synthesis is not None:
            if not svd_like:
                raise ConfigError("learned synthesis applies to SVD transforms only")
            if self.synthesis.basis_id != self.basis.id:
                raise ConfigError("synthesis operator is bound to a different basis")
        if not 0 < self.hop <= self.frame_len <= self.n:
            raise ConfigError("need 0 < hop <= frame_len <= n")

    @property
    def k_neighbors(self):
        return None if self.topology is None else self.topology.k_neighbors

    def forward(self, frames):
        if self.transform == "stft":
            return stft_forward(frames, self.n)
        if self.transform == "gft-evd":
            return gft_evd_forward(frames, self.basis)
        return gft_svd_forward(frames, self.basis)

    def inverse(self, spectrum) -> np.ndarray:
        if self.transform == "stft":
            return stft_inverse(spectrum).real
        if self.transform == "gft-evd":
            return gft_evd_inverse(spectrum, self.basis).real
        if self.synthesis is not None:
            return learned_inverse_apply(self.synthesis, spectrum)
        return gft_svd_inverse(spectrum, self.basis)

    def mask(self, clean_spec, noisy_spec) -> Mask:
        if isinstance(noisy_spec, ComplexSpectrum):
            return magnitude_mask(clean_spec, noisy_spec, self.clamp)
        return ideal_graph_mask(clean_spec, noisy_spec, self.clamp)


def make_pipeline(transform: str, n: int = 512, p: float | None = 0.01, k: int | None = None,
                  topology=None, synthesis=None, frame_len: int = 400, hop: int = 100,
                  window: str = "sqrt-hann", clamp=DEFAULT_CLAMP) -> Pipeline:
    """Build a pipeline, deriving topology and basis as the transform needs.

    Graph transforms take ``topology`` if given, else a cyclic graph with
    ``k`` neighbors (or ``sparsity_to_k(p, n)``).  ``gft-evd`` uses the
    binary shift operator; ``gft-svd`` the row-normalized fixed adjacency;
    ``gft-svd-learned`` the adjacency of a :class:`LearnableTopology`.
    """
    basis = None
    if transform != "stft" and topology is None:
        topology = build_shift_operator(n, k if k is not None else sparsity_to_k(p, n))
    if transform == "gft-evd":
        base = topology.base if isinstance(topology, LearnableTopology) else topology
        basis = circulant_evd(base)
    elif transform == "gft-svd":
        if isinstance(topology, LearnableTopology):
            basis = svd(topology.adjacency())
        else:
            basis = svd(fixed_adjacency(topology, "row-normalized"))
    elif transform == "gft-svd-learned":
        if not isinstance(topology, LearnableTopology):
            topology = LearnableTopology(topology)
        basis = svd(topology.adjacency())
    return Pipeline(transform, n, basis, synthesis, topology, frame_len, hop, window, clamp)


def _padding(length, frame_len, hop):
    head = frame_len - hop
    tail = frame_len - hop + (-(length + frame_len - hop)) % hop
    return head, tail


def frame_for(pipeline: Pipeline, buffer: AudioBuffer) -> FrameSequence:
    """Frame ``buffer`` after padding so every original sample is interior."""
    head, tail = _padding(len(buffer), pipeline.frame_len, pipeline.hop)
    padded = AudioBuffer(np.concatenate([np.zeros(head), buffer.samples, np.zeros(tail)]),
                         buffer.sample_rate)
    return frame_signal(padded, pipeline.frame_len, pipeline.hop, pipeline.window, pipeline.n)


def enhance_frames(pipeline: Pipeline, clean_frames: FrameSequence,
                   noisy_frames: FrameSequence) -> FrameSequence:
    """Apply the oracle mask in the pipeline's transform domain and invert."""
    noisy_spec = pipeline.forward(noisy_frames)
    clean_spec = pipeline.forward(clean_frames)
    masked = apply_mask(pipeline.mask(clean_spec, noisy_spec), noisy_spec)
    return noisy_frames.with_frames(pipeline.inverse(masked))


def reconstruct(pipeline, frames, length) -> AudioBuffer:
    """Overlap-add ``frames`` and crop the padding added by :func:`frame_for`."""
    head, _ = _padding(length, pipeline.frame_len, pipeline.hop)
    out = overlap_add(frames, pipeline.window)
    return AudioBuffer(out.samples[head : head + length], out.sample_rate)


def enhance(noisy: AudioBuffer, clean: AudioBuffer, pipeline: Pipeline):
    """Oracle-mask enhancement of ``noisy``; returns ``(enhanced, MetricsReport)``."""
    if len(noisy) != len(clean) or noisy.sample_rate != clean.sample_rate:
        raise ConfigError("noisy and clean must share length and sample rate")
    noisy_frames = frame_for(pipeline, noisy)
    clean_frames = frame_for(pipeline, clean)
    out_frames = enhance_frames(pipeline, clean_frames, noisy_frames)
    enhanced = reconstruct(pipeline, out_frames, len(noisy))
    return enhanced, evaluate(enhanced, clean, noisy, num_frames=out_frames.num_frames)


def evaluate(enhanced: AudioBuffer, clean: AudioBuffer, noisy: AudioBuffer,
             num_frames: int | None = None) -> MetricsReport:
    """SI-SDR of noisy and enhanced against clean, plus segmental SNR.

    ``num_frames`` defaults to the number of 32 ms metric segments.
    """
    if not len(enhanced) == len(clean) == len(noisy):
        raise ConfigError("enhanced, clean and noisy must have equal lengths")
    before = si_sdr(noisy.samples, clean.samples)
    after = si_sdr(enhanced.samples, clean.samples)
    if num_frames is None:
        num_frames = seg_count(len(clean), clean.sample_rate)
    return MetricsReport(
        si_sdr_noisy=before,
        si_sdr_enhanced=after,
        si_sdr_improvement=after - before,
        seg_snr_enhanced=seg_snr(enhanced.samples, clean.samples, clean.sample_rate),
        num_frames=int(num_frames),
    )


# --------------------------------------------------------------------------
# transform comparison over a sparsity grid

CSV_HEADER = ("transform", "p", "K", "si_sdr_noisy", "si_sdr_enhanced", "improvement", "seg_snr")


@dataclass(frozen=True)
class ReportRow:
    transform: str
    p: float
    k: int | None
    si_sdr_noisy: float
    si_sdr_enhanced: float
    improvement: float
    seg_snr: float
    per_mixture: tuple = field(default=(), compare=False)

    def values(self):
        k = "" if self.k is None else str(self.k)
        return (self.transform, f"{self.p:g}", k, f"{self.si_sdr_noisy:.6f}",
                f"{self.si_sdr_enhanced:.6f}", f"{self.improvement:.6f}", f"{self.seg_snr:.6f}")


@dataclass
class ReportTable:
    rows: list

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for row in self.rows:
            w.writerow(row.values())
        return buf.getvalue()

    def to_json(self) -> str:
        out = []
        for row in self.rows:
            d = dict(zip(CSV_HEADER, (row.transform, row.p, row.k, row.si_sdr_noisy,
                                      row.si_sdr_enhanced, row.improvement, row.seg_snr)))
            d["per_mixture_improvement"] = [m.si_sdr_improvement for m in row.per_mixture]
            out.append(d)
        return json.dumps(out, indent=1) + "\n"

    def select(self, transform):
        return [r for r in self.rows if r.transform == transform]


def _mean_row(transform, p, k, reports):
    mean = lambda name: float(np.mean([getattr(r, name) for r in reports]))  # noqa: E731
    return ReportRow(transform, p, k, mean("si_sdr_noisy"), mean("si_sdr_enhanced"),
                     mean("si_sdr_improvement"), mean("seg_snr_enhanced"), tuple(reports))


def _run_all(pipeline, mixtures, jobs):
    work = lambda m: enhance(m[1], m[0], pipeline)[1]  # noqa: E731
    if jobs > 1:
        with ThreadPoolExecutor(jobs) as pool:
            return list(pool.map(work, mixtures))
    return [work(m) for m in mixtures]


def compare_transforms(mixtures, sparsities, transforms=("stft", "gft-svd"), n: int = 512,
                       frame_len: int = 400, hop: int = 100, train_config=None,
                       learned_synthesis: bool = False, jobs: int = 1) -> ReportTable:
    """Mean oracle-mask metrics per (transform, sparsity) over ``mixtures``.

    ``mixtures`` is a sequence of ``(clean, noisy)`` buffer pairs.  Rows come
    out in ``transforms`` order, then ``sparsities`` order.  ``gft-svd-learned``
    rows train a learnable topology on the mixtures from the fixed
    initialization (and, with ``learned_synthesis``, a least-squares decoder);
    this needs ``n <= 64``.  Transforms whose basis does not depend on the
    sparsity (``stft`` and the circulant ``gft-evd``) are evaluated once and
    the result is repeated on each grid row.
    """
    from .learning import TrainConfig, train_decoder_on_masks, train_topology

    mixtures = list(mixtures)
    if not mixtures or not sparsities or not transforms:
        raise ConfigError("compare_transforms needs mixtures, sparsities and transforms")
    rows = []
    for transform in transforms:
        cached = None
        for p in sparsities:
            k = sparsity_to_k(p, n)
            if transform in ("stft", "gft-evd") and cached is not None:
                rows.append(ReportRow(transform, p, k, *cached))
                continue
            pipe = make_pipeline(transform, n=n, k=k, frame_len=frame_len, hop=hop)
            if transform == "gft-svd-learned":
                learned, _ = train_topology(mixtures, pipe.topology.base,
                                            train_config or TrainConfig(),
                                            frame_len=frame_len, hop=hop, jobs=jobs)
                pipe = make_pipeline(transform, n=n, topology=learned,
                                     frame_len=frame_len, hop=hop)
                if learned_synthesis:
                    op = train_decoder_on_masks(mixtures, pipe, train_config or TrainConfig())
                    pipe = make_pipeline(transform, n=n, topology=learned, synthesis=op,
                                         frame_len=frame_len, hop=hop)
            row = _mean_row(transform, p, k, _run_all(pipe, mixtures, jobs))
            rows.append(row)
            cached = (row.si_sdr_noisy, row.si_sdr_enhanced, row.improvement, row.seg_snr,
                      row.per_mixture)
    return ReportTable(rows)
