"""Command-line entry point.

Every command reads a flat ``key = value`` configuration (``--config``),
applies flag overrides, validates everything, and only then computes and
writes its artifacts into ``--out`` together with ``manifest.json``.  The
manifest stores the resolved configuration, so passing it back through
``--config`` reruns the command bit for bit.

Exit status: 0 success, 2 bad configuration, 3 I/O failure, 4 numerical
failure.  Failures print one JSON error record on stderr.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import platform
import sys
from dataclasses import dataclass, field, fields, replace

import numpy as np

from . import __version__
from .audio import (
    AudioBuffer,
    frame_signal,
    mix_at_snr,
    read_wav,
    synth_mixtures,
    synth_signal,
    write_wav,
)
from .bases import save_basis
from .enhancement import TRANSFORMS, compare_transforms, enhance, evaluate, make_pipeline
from .errors import ConfigError, LearnGFTError, NumericalError, WavError
from .learning import TrainConfig, train_inverse, train_topology
from .topology import LearnableTopology, build_shift_operator, load_topology, save_topology, sparsity_to_k
from .transforms import (
    gft_evd_forward,
    gft_svd_forward,
    load_operator,
    save_operator,
    save_spectrum,
    stft_forward,
    write_spectrum_csv,
)

__all__ = ["RunConfig", "load_config", "sub_seed", "main"]

EXIT_CONFIG, EXIT_IO, EXIT_NUMERICAL = 2, 3, 4
COMMANDS = ("synth", "mix", "transform", "train-inverse", "train-topology",
            "enhance", "evaluate", "sweep")
SYNTH_KINDS = ("sine", "chirp", "white-noise")


@dataclass(frozen=True)
class RunConfig:
    # framing
    sample_rate: int = 16000
    frame_len: int = 400
    hop: int = 100
    pad_to: int = 512
    window: str = "sqrt-hann"
    # graph / transform
    p: float = 0.01
    transform: str = "gft-svd"
    synthesis: str = "exact"
    sparsities: str = "0.01,0.04,0.12,0.2,0.4,1"
    transforms: str = "stft,gft-svd"
    # training
    learning_rate: float = 0.5
    max_iters: int = 20
    tolerance: float = 1e-4
    fd_epsilon: float = 1e-4
    ridge: float = 1e-6
    method: str = "least-squares"
    # signals
    kind: str = "sine"
    duration: float = 1.0
    freq: float = 440.0
    f0: float = 100.0
    f1: float = 4000.0
    snr_db: float = 0.0
    mixtures: int = 10
    wav_format: str = "float32"
    # runtime
    seed: int = 0
    jobs: int = 1
    out: str = "out"
    # inputs ("" = synthesize)
    clean: str = ""
    noise: str = ""
    noisy: str = ""
    enhanced: str = ""
    input: str = ""
    topology: str = ""
    operator: str = ""

    def sparsity_list(self):
        return [float(v) for v in self.sparsities.split(",") if v.strip()]

    def transform_list(self):
        return [v.strip() for v in self.transforms.split(",") if v.strip()]

    def train_config(self) -> TrainConfig:
        return TrainConfig(learning_rate=self.learning_rate, max_iters=self.max_iters,
                           tolerance=self.tolerance, seed=sub_seed(self.seed, "init"),
                           fd_epsilon=self.fd_epsilon, ridge=self.ridge)

    def validate(self) -> None:
        if self.sample_rate <= 0:
            raise ConfigError("sample_rate must be positive")
        if not 0 < self.hop <= self.frame_len <= self.pad_to:
            raise ConfigError("need 0 < hop <= frame_len <= pad_to")
        if self.window not in ("rect", "hann", "sqrt-hann"):
            raise ConfigError(f"unknown window {self.window!r}")
        for t in [self.transform] + self.transform_list():
            if t not in TRANSFORMS:
                raise ConfigError(f"unknown transform {t!r}")
        for p in [self.p] + self.sparsity_list():
            if not 0 < p <= 1:
                raise ConfigError(f"sparsity must lie in (0, 1], got {p}")
        if self.synthesis not in ("exact", "learned"):
            raise ConfigError(f"unknown synthesis {self.synthesis!r}")
        if self.method not in ("least-squares", "gradient"):
            raise ConfigError(f"unknown method {self.method!r}")
        if self.kind not in SYNTH_KINDS:
            raise ConfigError(f"unknown signal kind {self.kind!r}")
        if self.wav_format not in ("float32", "pcm16"):
            raise ConfigError(f"unknown wav_format {self.wav_format!r}")
        if self.duration <= 0 or self.mixtures < 1 or self.jobs < 1:
            raise ConfigError("duration, mixtures and jobs must be positive")
        self.train_config()


_FIELDS = {f.name: f for f in fields(RunConfig)}


def _coerce(name, raw):
    kind = type(getattr(RunConfig(), name))
    try:
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {raw!r} as {kind.__name__}") from None
    return str(raw)


def _parse_pairs(lines, source):
    out = {}
    for num, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{num}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _FIELDS:
            raise ConfigError(f"{source}:{num}: unknown key {key!r}")
        out[key] = value
    return out


def load_config(path) -> dict:
    """Raw key/value pairs from a config file or from a run manifest."""
    try:
        with open(path) as f:
            text = f.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if text.lstrip().startswith("{"):
        try:
            doc = json.loads(text)
            pairs = {k: str(v) for k, v in doc["config"].items()}
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"{path}: not a run manifest") from exc
        unknown = set(pairs) - set(_FIELDS)
        if unknown:
            raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")
        return pairs
    return _parse_pairs(text.splitlines(), path)


def sub_seed(seed: int, name: str) -> int:
    """Independent 63-bit seed for the stream ``name`` of run seed ``seed``."""
    digest = hashlib.sha256(f"{int(seed)}/{name}".encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1


def _json_value(v):
    return str(v) if isinstance(v, float) and not np.isfinite(v) else v


def config_text(cfg: RunConfig, skip=()) -> str:
    return "".join(f"{f.name} = {getattr(cfg, f.name)!s}\n" for f in fields(cfg)
                   if f.name not in skip)


# --------------------------------------------------------------------------
# artifacts


@dataclass
class Run:
    command: str
    cfg: RunConfig
    artifacts: dict = field(default_factory=dict)

    def path(self, name):
        return os.path.join(self.cfg.out, name)

    def text(self, name, content):
        with open(self.path(name), "w") as f:
            f.write(content)
        self.artifacts[name] = None

    def json(self, name, obj):
        self.text(name, json.dumps(obj, indent=1, sort_keys=True) + "\n")

    def wav(self, name, buffer):
        write_wav(self.path(name), buffer, self.cfg.wav_format)
        self.artifacts[name] = None

    def binary(self, name, writer, obj):
        writer(self.path(name), obj)
        self.artifacts[name] = None

    def manifest(self):
        digests = {}
        for name in sorted(self.artifacts):
            with open(self.path(name), "rb") as f:
                digests[name] = hashlib.sha256(f.read()).hexdigest()
        cfg = {f.name: _json_value(getattr(self.cfg, f.name)) for f in fields(self.cfg)}
        # the output directory does not affect the computation, so it stays out of the hash
        digest = hashlib.sha256(config_text(self.cfg, skip=("out",)).encode()).hexdigest()
        doc = {
            "command": self.command,
            "config": cfg,
            "config_hash": digest,
            "seed": self.cfg.seed,
            "sub_seeds": {k: sub_seed(self.cfg.seed, k) for k in ("signal", "noise", "init")},
            "versions": {
                "learngft": __version__,
                "numpy": np.__version__,
                "python": platform.python_version(),
            },
            "artifacts": digests,
        }
        with open(self.path("manifest.json"), "w") as f:
            f.write(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def _need(path, what):
    if path and not os.path.isfile(path):
        raise WavError(f"{what} file not found: {path}")


def _clean_signal(cfg):
    if cfg.clean:
        return read_wav(cfg.clean)
    return synth_signal(cfg.kind, cfg.duration, seed=sub_seed(cfg.seed, "signal"),
                        sample_rate=cfg.sample_rate, **_kind_params(cfg))


def _kind_params(cfg):
    if cfg.kind == "sine":
        return {"freq": cfg.freq}
    if cfg.kind == "chirp":
        return {"f0": cfg.f0, "f1": cfg.f1}
    return {}


def _noise_for(cfg, clean):
    if cfg.noise:
        noise = read_wav(cfg.noise)
        if len(noise) < len(clean):
            raise ConfigError("noise is shorter than the clean signal")
        return AudioBuffer(noise.samples[: len(clean)], noise.sample_rate)
    return synth_signal("white-noise", len(clean) / clean.sample_rate,
                        seed=sub_seed(cfg.seed, "noise"), sample_rate=clean.sample_rate)


def _mixture(cfg):
    """``(clean, noisy)``: read from disk when both paths are set, else mixed."""
    clean = _clean_signal(cfg)
    if cfg.noisy:
        return clean, read_wav(cfg.noisy)
    return clean, mix_at_snr(clean, _noise_for(cfg, clean), cfg.snr_db)[0]


def _mixture_set(cfg, duration=None):
    if cfg.clean and cfg.noisy:
        return [_mixture(cfg)]
    return synth_mixtures(cfg.mixtures, duration or cfg.duration, seed=sub_seed(cfg.seed, "signal"),
                          snr_db=cfg.snr_db, sample_rate=cfg.sample_rate)


def _pipeline(cfg, transform=None):
    transform = transform or cfg.transform
    topology = load_topology(cfg.topology) if cfg.topology else None
    if transform == "gft-svd-learned" and topology is None:
        raise ConfigError("gft-svd-learned needs topology = <learned topology JSON>")
    op = load_operator(cfg.operator) if cfg.synthesis == "learned" else None
    if topology is not None and topology.n_vertices != cfg.pad_to:
        raise ConfigError("topology size does not match pad_to")
    return make_pipeline(transform, n=cfg.pad_to, p=cfg.p, topology=topology, synthesis=op,
                         frame_len=cfg.frame_len, hop=cfg.hop, window=cfg.window)


# --------------------------------------------------------------------------
# commands


def cmd_synth(run: Run):
    run.wav("signal.wav", _clean_signal(run.cfg))


def cmd_mix(run: Run):
    cfg = run.cfg
    clean = _clean_signal(cfg)
    noise = _noise_for(cfg, clean)
    noisy, gain = mix_at_snr(clean, noise, cfg.snr_db)
    run.wav("clean.wav", clean)
    run.wav("noisy.wav", noisy)
    run.json("mix.json", {"snr_db": cfg.snr_db, "noise_gain": gain})


def cmd_transform(run: Run):
    cfg = run.cfg
    pipe = _pipeline(cfg)
    signal = read_wav(cfg.input) if cfg.input else _clean_signal(cfg)
    frames = frame_signal(signal, cfg.frame_len, cfg.hop, cfg.window, cfg.pad_to)
    if pipe.transform in ("gft-svd", "gft-svd-learned"):
        spec = gft_svd_forward(frames, pipe.basis)
        run.binary("basis.bin", save_basis, pipe.basis)
        run.binary("spectrum.bin", save_spectrum, spec)
        run.binary("spectrum.csv", write_spectrum_csv, spec)
    else:
        spec = stft_forward(frames) if pipe.transform == "stft" else gft_evd_forward(frames, pipe.basis)
        for part in ("real", "imag"):
            data = getattr(spec.data, part)
            run.text(f"spectrum_{part}.csv",
                     "".join(",".join(f"{v:.12g}" for v in row) + "\n" for row in data))
    if pipe.topology is not None:
        topo = pipe.topology
        if not isinstance(topo, LearnableTopology):
            topo = LearnableTopology(topo)
        run.binary("topology.json", save_topology, topo)


def cmd_train_inverse(run: Run):
    cfg = run.cfg
    pipe = _pipeline(cfg, "gft-svd" if cfg.transform not in ("gft-svd", "gft-svd-learned")
                     else cfg.transform)
    signal = read_wav(cfg.input) if cfg.input else _mixture(cfg)[1]
    frames = frame_signal(signal, cfg.frame_len, cfg.hop, cfg.window, cfg.pad_to)
    op, report = train_inverse(frames, pipe.basis, cfg.train_config(), cfg.method)
    run.binary("operator.bin", save_operator, op)
    run.binary("basis.bin", save_basis, pipe.basis)
    run.text("train_report.json", report.to_json(include_timing=False))
    run.text("trace.csv", report.trace_csv())


def cmd_train_topology(run: Run):
    cfg = run.cfg
    k = sparsity_to_k(cfg.p, cfg.pad_to)
    base = build_shift_operator(cfg.pad_to, k)
    mixtures = _mixture_set(cfg)
    topo, report = train_topology(mixtures, base, cfg.train_config(), frame_len=cfg.frame_len,
                                  hop=cfg.hop, jobs=cfg.jobs)
    run.binary("topology.json", save_topology, topo)
    run.text("train_report.json", report.to_json(include_timing=False))
    run.text("trace.csv", report.trace_csv())


def cmd_enhance(run: Run):
    cfg = run.cfg
    pipe = _pipeline(cfg)
    clean, noisy = _mixture(cfg)
    enhanced, metrics = enhance(noisy, clean, pipe)
    run.wav("enhanced.wav", enhanced)
    run.json("metrics.json", metrics.to_dict())


def cmd_evaluate(run: Run):
    cfg = run.cfg
    if not (cfg.enhanced and cfg.clean and cfg.noisy):
        raise ConfigError("evaluate needs enhanced, clean and noisy WAV paths")
    report = evaluate(read_wav(cfg.enhanced), read_wav(cfg.clean), read_wav(cfg.noisy))
    run.json("metrics.json", report.to_dict())


def cmd_sweep(run: Run):
    cfg = run.cfg
    table = compare_transforms(_mixture_set(cfg), cfg.sparsity_list(), cfg.transform_list(),
                               n=cfg.pad_to, frame_len=cfg.frame_len, hop=cfg.hop,
                               train_config=cfg.train_config(),
                               learned_synthesis=cfg.synthesis == "learned", jobs=cfg.jobs)
    run.text("report.csv", table.to_csv())
    run.text("report.json", table.to_json())


_HANDLERS = {
    "synth": cmd_synth, "mix": cmd_mix, "transform": cmd_transform,
    "train-inverse": cmd_train_inverse, "train-topology": cmd_train_topology,
    "enhance": cmd_enhance, "evaluate": cmd_evaluate, "sweep": cmd_sweep,
}


# --------------------------------------------------------------------------
# entry point


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="learngft", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"learngft {__version__}")
    # options are accepted before or after the subcommand
    common = argparse.ArgumentParser(add_help=False)
    for target in (parser, common):
        target.add_argument("--config", metavar="PATH", default=argparse.SUPPRESS,
                            help="key = value file or run manifest")
        for f in fields(RunConfig):
            target.add_argument("--" + f.name.replace("_", "-"), dest=f.name,
                                default=argparse.SUPPRESS, metavar=f.name.upper(),
                                help=f"default {getattr(RunConfig(), f.name)!r}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=_HANDLERS[name].__name__)
    return parser


def resolve(argv) -> tuple[str, RunConfig]:
    """Parse ``argv`` into a command and a validated configuration."""
    args = build_parser().parse_args(argv)
    config = getattr(args, "config", None)
    values = load_config(config) if config else {}
    for name in _FIELDS:
        flag = getattr(args, name, None)
        if flag is not None:
            values[name] = flag
    cfg = replace(RunConfig(), **{k: _coerce(k, v) for k, v in values.items()})
    cfg.validate()
    return args.command, cfg


def _preflight(command, cfg):
    """Check inputs exist before any output is written."""
    for name in ("clean", "noise", "noisy", "enhanced", "input", "topology", "operator"):
        _need(getattr(cfg, name), name)
    if cfg.noisy and not cfg.clean:
        raise ConfigError("a noisy input also needs its clean reference")
    if cfg.synthesis == "learned" and command in ("enhance", "transform") and not cfg.operator:
        raise ConfigError("synthesis = learned needs operator = <operator file>")
    if command == "train-topology" and cfg.pad_to > 64:
        raise ConfigError("train-topology supports pad_to <= 64 (finite-difference gradients)")
    if command == "sweep" and "gft-svd-learned" in cfg.transform_list() and cfg.pad_to > 64:
        raise ConfigError("learned sweep rows need pad_to <= 64")


def _fail(exc, code):
    record = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    print(json.dumps(record, sort_keys=True), file=sys.stderr)
    return code


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        command, cfg = resolve(argv)
        _preflight(command, cfg)
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except (ConfigError, WavError) as exc:
        return _fail(exc, EXIT_CONFIG if isinstance(exc, ConfigError) else EXIT_IO)
    run = Run(command, cfg)
    try:
        os.makedirs(cfg.out, exist_ok=True)
        _HANDLERS[command](run)
        run.manifest()
    except ConfigError as exc:
        return _fail(exc, EXIT_CONFIG)
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        return _fail(exc, EXIT_NUMERICAL)
    except (WavError, OSError) as exc:
        return _fail(exc, EXIT_IO)
    except LearnGFTError as exc:
        return _fail(exc, EXIT_CONFIG)
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
