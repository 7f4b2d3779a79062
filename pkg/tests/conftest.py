"""Shared fixtures, model builders and naive reference implementations.

The naive_* functions are deliberately plain double-loop reimplementations
used as independent oracles; they never call the batched production kernels.
"""

import numpy as np
import pytest

from ssencoder import Dataset, SSEncoderModel
from ssencoder.net import ResidualNet, init_net


def affine_net(w, b) -> ResidualNet:
    return ResidualNet([], [], None, np.asarray(w, dtype=np.float64),
                       np.asarray(b, dtype=np.float64))


def linear_model(A, B, C, D, n_a, n_b, enc_w=None, enc_b=None) -> SSEncoderModel:
    """Affine-only model implementing x+ = Ax + Bu, y = Cx + Du exactly."""
    A, B, C, D = (np.atleast_2d(np.asarray(m, dtype=np.float64)) for m in (A, B, C, D))
    n_x, n_u, n_y = A.shape[0], B.shape[1], C.shape[0]
    f = affine_net(np.hstack([A, B]), np.zeros(n_x))
    h = affine_net(np.hstack([C, D]), np.zeros(n_y))
    n_enc = n_a * n_y + n_b * n_u
    if enc_w is None:
        enc_w = np.zeros((n_x, n_enc))
    if enc_b is None:
        enc_b = np.zeros(n_x)
    e = affine_net(enc_w, enc_b)
    return SSEncoderModel(e, f, h, n_x, n_u, n_y, n_a, n_b)


def random_tiny_model(rng, max_hidden=8) -> SSEncoderModel:
    from ssencoder import build_model
    n_x = int(rng.integers(1, 5))
    n_u = int(rng.integers(1, 3))
    n_y = int(rng.integers(1, 3))
    n_a = int(rng.integers(1, 5))
    n_b = int(rng.integers(1, 5))
    n_layers = int(rng.integers(0, 3))
    hidden = tuple(int(rng.integers(1, max_hidden + 1)) for _ in range(n_layers))
    seed = int(rng.integers(0, 2**31))
    return build_model(n_x, n_u, n_y, n_a, n_b, hidden=hidden, seed=seed)


def random_dataset(rng, m: SSEncoderModel, n: int) -> Dataset:
    return Dataset(u=rng.standard_normal((n, m.n_u)),
                   y=rng.standard_normal((n, m.n_y)))


# ---------------------------------------------------------------------------
# naive oracles

def naive_net_forward(net: ResidualNet, z) -> np.ndarray:
    h = np.asarray(z, dtype=np.float64)
    for W, b in zip(net.hidden_w, net.hidden_b):
        h = np.tanh(W @ h + b)
    out = net.w_bypass @ np.asarray(z, dtype=np.float64) + net.b_bypass
    if net.hidden_w:
        out = out + net.w_out @ h
    return out


def naive_normalized(m: SSEncoderModel, d: Dataset):
    un = (d.u - m.u_norm.mean) / m.u_norm.std
    yn = (d.y - m.y_norm.mean) / m.y_norm.std
    return un, yn


def naive_encode(m: SSEncoderModel, un, yn, t: int) -> np.ndarray:
    hist = np.concatenate([yn[t - m.n_a:t].ravel(), un[t - m.n_b:t].ravel()])
    return naive_net_forward(m.encoder_net, hist)


def naive_rollout(m: SSEncoderModel, un, yn, t: int, n_steps: int) -> np.ndarray:
    """Per-step loop: encode at t, then alternate output/state evaluations."""
    x = naive_encode(m, un, yn, t)
    yhat = np.empty((n_steps, m.n_y))
    for k in range(n_steps):
        z = np.concatenate([x, un[t + k]])
        yhat[k] = naive_net_forward(m.output_net, z)
        x = naive_net_forward(m.state_net, z)
    return yhat


def naive_encoder_loss(m: SSEncoderModel, d: Dataset, starts, T: int, k0: int) -> float:
    un, yn = naive_normalized(m, d)
    total = 0.0
    for t in starts:
        yhat = naive_rollout(m, un, yn, int(t), T + k0 + 1)
        for k in range(k0, T + k0 + 1):
            r = yhat[k] - yn[t + k]
            total += float(r @ r)
    return total / (2.0 * len(starts) * (T + 1))


def naive_nstep_nrms(m: SSEncoderModel, d: Dataset, n_max: int) -> np.ndarray:
    un, yn = naive_normalized(m, d)
    lo = max(m.n_a, m.n_b)
    acc = np.zeros(n_max + 1)
    count = 0
    for t in range(lo, d.n_samples - n_max):
        yhat = naive_rollout(m, un, yn, t, n_max + 1)
        for n in range(n_max + 1):
            r = m.y_norm.invert(yhat[n]) - d.y[t + n]
            acc[n] += float(r @ r)
        count += 1
    ycent = d.y[lo:] - d.y[lo:].mean(axis=0)
    sigma = np.sqrt(np.mean(np.sum(ycent * ycent, axis=1)))
    return np.sqrt(acc / count) / sigma


def naive_dft_mag(x) -> np.ndarray:
    """O(N^2) direct-sum one-sided DFT magnitude of a real signal."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    mags = np.empty(n // 2 + 1)
    for k in range(n // 2 + 1):
        s = 0.0 + 0.0j
        for t in range(n):
            s += x[t] * np.exp(-2j * np.pi * k * t / n)
        mags[k] = abs(s)
    return mags


def fd_gradient(loss_fn, pv, h: float = 1e-6) -> np.ndarray:
    """Central finite differences of a scalar loss over a ParamVector."""
    p0 = pv.flatten()
    g = np.zeros(p0.size)
    for i in range(p0.size):
        p = p0.copy()
        p[i] = p0[i] + h
        pv.load(p)
        lp = loss_fn()
        p[i] = p0[i] - h
        pv.load(p)
        lm = loss_fn()
        g[i] = (lp - lm) / (2.0 * h)
    pv.load(p0)
    return g


def grad_errors(g, fd, zero_band: float = 1e-3):
    """(max relative error where fd is sizable, max absolute error elsewhere)."""
    g = np.asarray(g)
    fd = np.asarray(fd)
    big = np.abs(fd) > zero_band
    rel = np.abs(g[big] - fd[big]) / np.abs(fd[big]) if big.any() else np.zeros(1)
    absr = np.abs(g[~big] - fd[~big]) if (~big).any() else np.zeros(1)
    return float(rel.max()), float(absr.max())


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)
