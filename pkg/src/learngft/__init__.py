"""Graph Fourier transforms over cyclic sample graphs for speech enhancement.

Frames of a waveform are treated as signals on a directed cyclic graph in
which every sample links to its ``K`` predecessors.  The package provides
the graph topologies, SVD and circulant eigen bases, the time-graph
transforms built on them, oracle-mask enhancement, and trainers for a
learned synthesis operator and a learnable row-stochastic adjacency.
"""

__version__ = "0.1.0"

from .audio import (
    AudioBuffer,
    FrameSequence,
    cola_constant,
    frame_signal,
    make_window,
    mix_at_snr,
    overlap_add,
    read_wav,
    synth_mixtures,
    synth_signal,
    write_wav,
)
from .bases import EvdBasis, GraphBasis, circulant_evd, load_basis, save_basis, svd
from .enhancement import (
    Mask,
    MetricsReport,
    Pipeline,
    ReportTable,
    compare_transforms,
    enhance,
    evaluate,
    ideal_graph_mask,
    make_pipeline,
    magnitude_mask,
)
from .errors import (
    BasisMismatchError,
    ColaError,
    ConfigError,
    LearnGFTError,
    MalformedWavError,
    NumericalError,
    SingularSystemError,
    SvdConvergenceError,
    UnsupportedCodecError,
    WavError,
    WavFileMissingError,
)
from .learning import TrainConfig, TrainReport, train_inverse, train_topology
from .metrics import seg_snr, si_sdr, si_sdr_gradient
from .topology import (
    TABLE_SPARSITIES,
    GraphTopology,
    LearnableTopology,
    build_shift_operator,
    init_learnable,
    load_topology,
    save_topology,
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
