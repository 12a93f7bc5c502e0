#!/usr/bin/env python3
# The neural building blocks: sinusoidal positions, masked multi-head
# attention, and layer normalization statistics.

import numpy as np

import chatgan.layers as L
from chatgan.tensor import Tensor

rng = np.random.default_rng(1)

# positional table: even columns are sines, odd columns cosines
pe = L.PositionalEncoding(max_len=8, d_model=8)
print("position 0 row:", np.round(pe.table.data[0], 3))
print("position 1 row:", np.round(pe.table.data[1], 3))
print("all entries within [-1, 1]:", abs(pe.table.data).max() <= 1.0)

# causal masking: position t cannot see positions > t
mask = L.AttentionMask.causal(5)
print("\ncausal mask:\n", mask.matrix.astype(int))

mha = L.MultiHeadAttention(d_model=16, n_heads=4, rng=rng)
x = Tensor(rng.normal(size=(5, 16)))
out = mha(x, x, x, mask)
x2 = Tensor(np.vstack([x.data[:3], rng.normal(size=(2, 16))]))
out2 = mha(x2, x2, x2, mask)
print("rows 0..2 unchanged when rows 3..4 are replaced:",
      np.array_equal(out.data[:3], out2.data[:3]))

# padding masks drop pad keys entirely
keep = np.array([True, True, True, False, False])
pad_mask = L.AttentionMask.padding(5, keep)
combined = L.AttentionMask.causal(5).combine(pad_mask)
print("combined mask kind:", combined.kind)

# layer norm: per-position zero mean, unit variance before the affine
ln = L.LayerNorm(16)
normed = ln(Tensor(rng.normal(3.0, 2.5, size=(5, 16))))
core = normed.data  # gamma=1, beta=0 at init
print("\nper-position means ~0:", np.round(core.mean(axis=-1), 6))
print("per-position vars  ~1:", np.round(core.var(axis=-1), 4))

# inverted dropout preserves the expectation
drop = L.dropout(Tensor(np.ones(50_000)), rate=0.5, training=True, rng=rng)
print("\ndropout(0.5) mean over 50k ones:", round(float(drop.data.mean()), 4))
