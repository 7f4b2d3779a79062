"""Pure-numpy batched kernels for residual nets (fallback backend).

Both backends implement the same two entry points with identical semantics:

net_forward(hidden_w, hidden_b, w_out, w_bypass, b_bypass, z)
    z: (B, n_in). Returns (z_out (B, n_out), hs) where hs holds the
    post-tanh activation of every hidden layer, needed for the backward pass.

net_backward(hidden_w, hidden_b, w_out, w_bypass, z, hs, dz_out,
             gw_hidden, gb_hidden, gw_out, gw_bypass, gb_bypass)
    Accumulates parameter gradients into the g* buffers (+=) and returns
    dz_in (B, n_in).
"""

import numpy as np

name = "numpy"


def net_forward(hidden_w, hidden_b, w_out, w_bypass, b_bypass, z):
    out = z @ w_bypass.T + b_bypass
    hs = []
    h = z
    for W, b in zip(hidden_w, hidden_b):
        h = np.tanh(h @ W.T + b)
        hs.append(h)
    if hidden_w:
        out += h @ w_out.T
    return out, hs


def net_backward(hidden_w, hidden_b, w_out, w_bypass, z, hs, dz_out,
                 gw_hidden, gb_hidden, gw_out, gw_bypass, gb_bypass):
    gw_bypass += dz_out.T @ z
    gb_bypass += dz_out.sum(axis=0)
    dz = dz_out @ w_bypass
    if hidden_w:
        gw_out += dz_out.T @ hs[-1]
        dh = dz_out @ w_out
        for l in range(len(hidden_w) - 1, -1, -1):
            dh = dh * (1.0 - hs[l] * hs[l])  # tanh' through stored activation
            prev = z if l == 0 else hs[l - 1]
            gw_hidden[l] += dh.T @ prev
            gb_hidden[l] += dh.sum(axis=0)
            dh = dh @ hidden_w[l]
        dz = dz + dh
    return dz
