"""Learning a synthesis operator and a graph topology.

The least-squares inverse recovers psi when the data span every direction.
Topology training runs finite-difference ascent on a small graph, so it is
kept to N = 32 here.
"""
# %%
import numpy as np

from learngft import (TrainConfig, build_shift_operator, frame_signal, init_learnable,
                      mix_at_snr, synth_mixtures, synth_signal, train_inverse, train_topology)
from learngft.bases import basis_from_adjacency

# %%
clean = synth_signal("sine", 0.5, freq=440.0)
noisy = mix_at_snr(clean, synth_signal("white-noise", 0.5, seed=1), 0.0)[0]
frames = frame_signal(noisy, 64, 16, "rect", 64).frames
basis = basis_from_adjacency(build_shift_operator(64, 1))

op, report = train_inverse(frames, basis, TrainConfig(ridge=0.0))
print("|B - psi|", np.abs(op.b - basis.psi).max())
print("reconstruction SI-SDR", round(report.final_objective, 1), "dB")

# %% [markdown]
# The uniform start is a circulant matrix with paired singular values, where
# the objective is not smooth.  A small seeded perturbation avoids it.

# %%
mixtures = synth_mixtures(2, duration=0.1, seed=0)
base = build_shift_operator(32, 3)
init = init_learnable(base, "seeded-uniform", seed=1, scale=0.1)
topo, report = train_topology(mixtures, base, TrainConfig(max_iters=5), frame_len=32, hop=8,
                              init=init)
print("objective", [round(v, 3) for v in [report.initial_objective] + report.objective_trace])
print("row sums", np.round(topo.adjacency().sum(axis=1)[:4], 12))
