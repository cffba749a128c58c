"""Forward and inverse transforms on framed audio.

Frames a chirp, runs the STFT, the circulant GFT and the SVD GFT over each
frame, and reports the round-trip error of every transform.
"""
# %%
import numpy as np

from learngft import (build_shift_operator, circulant_evd, frame_signal, gft_evd_forward,
                      gft_evd_inverse, gft_svd_forward, gft_svd_inverse, overlap_add,
                      stft_forward, stft_inverse, synth_signal)
from learngft.bases import basis_from_adjacency

# %%
signal = synth_signal("chirp", 0.5, f0=100.0, f1=4000.0)
frames = frame_signal(signal, frame_len=400, hop=100, window="sqrt-hann", pad_to=512)
print("frames", frames.frames.shape)

topology = build_shift_operator(512, 5)
svd_basis = basis_from_adjacency(topology)
evd_basis = circulant_evd(topology)

# %%
x = frames.frames
checks = {
    "stft": stft_inverse(stft_forward(x)),
    "gft-evd": gft_evd_inverse(gft_evd_forward(x, evd_basis), evd_basis),
    "gft-svd": gft_svd_inverse(gft_svd_forward(x, svd_basis), svd_basis),
}
for name, back in checks.items():
    print(f"{name:8s} max round-trip error {np.abs(back - x).max():.1e}")

# %% [markdown]
# Overlap-add of the framed signal gives the waveform back away from the edges.

# %%
out = overlap_add(frames, "sqrt-hann")
sl = frames.interior()
print("interior error", np.abs(out.samples[sl] - signal.samples[sl]).max())
