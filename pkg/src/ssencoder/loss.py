"""Section sampling and training losses with exact BPTT gradients.

Three loss modes share one rollout core:

  encoder loss    mean over N sections of squared prediction error along a
                  horizon of T scored steps (k0 burn-in steps excluded),
                  divided by 2; the section-initial state comes from the
                  encoder applied to the preceding history window.
  batch loss      same summand restricted to a subset of sections and
                  normalized by the batch size.
  simulation loss mean squared error of a single free run over the whole set.

All losses are computed in normalized signal space; gradients are exact
derivatives through the full unrolled recursion, encoder included.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .model import SSEncoderModel, RolloutTapes, _free_run, _encoder_inputs, \
    rollout_forward, rollout_backward
from .net import forward_batch


@dataclass
class SectionSet:
    """Section start indices with a shared horizon T and burn-in k0."""

    starts: np.ndarray
    T: int
    k0: int = 0

    def __post_init__(self):
        self.starts = np.asarray(self.starts, dtype=np.intp)
        if self.T < 0 or self.k0 < 0:
            raise ValueError("T and k0 must be >= 0")
        if self.starts.size == 0:
            raise ValueError("section set is empty")

    def __len__(self) -> int:
        return self.starts.size


@dataclass
class Batch:
    """Subset of section indices (positions within a SectionSet)."""

    indices: np.ndarray

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.intp)
        if self.indices.size == 0:
            raise ValueError("batch is empty")

    def __len__(self) -> int:
        return self.indices.size


def valid_starts(d: Dataset, n_a: int, n_b: int, T: int, k0: int = 0) -> np.ndarray:
    """All section start indices with full history and horizon in bounds.

    Every index in [max(n_a, n_b), N-1-T-k0] is valid; sections may overlap.
    """
    lo = max(n_a, n_b)
    hi = d.n_samples - 1 - T - k0
    if hi < lo:
        need = lo + T + k0 + 1
        raise ValueError(
            f"dataset too short for sections: {d.n_samples} samples, need >= {need}"
        )
    return np.arange(lo, hi + 1, dtype=np.intp)


def _check_sections(m: SSEncoderModel, d: Dataset, sections: SectionSet) -> None:
    lo = m.warmup
    hi = d.n_samples - 1 - sections.T - sections.k0
    s = sections.starts
    if s.min() < lo or s.max() > hi:
        raise ValueError(
            f"section starts must lie in [{lo}, {hi}] for this dataset/horizon"
        )


def _normalized(m: SSEncoderModel, d: Dataset):
    un = m.u_norm.apply(d.u).astype(m.dtype)
    yn = m.y_norm.apply(d.y).astype(m.dtype)
    return un, yn


def _sections_loss_grad(m, un, yn, starts, T, k0, denom):
    """Loss and flat gradient for a batch of sections on normalized data."""
    yhat, tapes = rollout_forward(m, un, yn, starts, T, k0, need_tape=True)
    steps = np.arange(T + k0 + 1, dtype=np.intp)
    targets = yn[starts[None, :] + steps[:, None]]
    resid = yhat - targets
    if k0:
        resid[:k0] = 0
    scale = 1.0 / (denom * (T + 1))
    r64 = resid.astype(np.float64, copy=False).ravel()
    loss = 0.5 * scale * float(r64 @ r64)
    grads = m.zero_grads()
    rollout_backward(m, tapes, resid * m.dtype.type(scale), grads)
    return loss, m.pack_grads(grads)


def encoder_loss(m: SSEncoderModel, d: Dataset, sections: SectionSet):
    """Sectioned multi-step loss over every section; returns (loss, gradient)."""
    _check_sections(m, d, sections)
    un, yn = _normalized(m, d)
    return _sections_loss_grad(m, un, yn, sections.starts, sections.T, sections.k0,
                               denom=len(sections))


def batch_loss(m: SSEncoderModel, d: Dataset, sections: SectionSet, batch: Batch):
    """Sectioned loss restricted to a batch, normalized by the batch size."""
    _check_sections(m, d, sections)
    if batch.indices.min() < 0 or batch.indices.max() >= len(sections):
        raise ValueError("batch indices out of range for the section set")
    un, yn = _normalized(m, d)
    starts = sections.starts[batch.indices]
    return _sections_loss_grad(m, un, yn, starts, sections.T, sections.k0,
                               denom=len(batch))


def simulation_loss(m: SSEncoderModel, d: Dataset, init: str = "encoder"):
    """Mean squared error of one free run over the whole set, with gradient.

    init "encoder" starts at t0 = max(n_a, n_b) from the encoded state (the
    encoder receives gradient); init "zero" starts at t = 0 from the zero
    state. The mean runs over the simulated samples.
    """
    un, yn = _normalized(m, d)
    if init == "encoder":
        if d.n_samples <= m.warmup:
            raise ValueError(
                f"dataset has {d.n_samples} samples; encoder init needs more than {m.warmup}"
            )
        t0 = m.warmup
        starts = np.array([t0], dtype=np.intp)
        enc = _encoder_inputs(m, un, yn, starts)
        x0, tape_e = forward_batch(m.encoder_net, enc)
    elif init == "zero":
        t0 = 0
        starts = np.array([0], dtype=np.intp)
        x0 = np.zeros((1, m.n_x), dtype=m.dtype)
        tape_e = None
    else:
        raise ValueError(f"unknown init {init!r}")
    n_steps = d.n_samples - t0
    yhat, (tapes_h, tapes_f) = _free_run(m, un, x0, starts, n_steps, need_tape=True)
    resid = yhat[:, 0, :] - yn[t0:]
    r64 = resid.astype(np.float64, copy=False).ravel()
    loss = float(r64 @ r64) / n_steps
    dyhat = (resid * m.dtype.type(2.0 / n_steps))[:, None, :]
    tapes = RolloutTapes(tape_e, tapes_h, tapes_f, starts, n_steps - 1, 0)
    grads = m.zero_grads()
    rollout_backward(m, tapes, dyhat, grads)
    return loss, m.pack_grads(grads)


def make_epoch_batches(starts, n_batch: int, seed: int, epoch_index: int) -> list:
    """Shuffle all section positions and chunk them into batches.

    Deterministic given (seed, epoch_index); a final short remainder is
    dropped so every batch has exactly n_batch sections.
    """
    n = len(starts)
    if n_batch < 1:
        raise ValueError("n_batch must be >= 1")
    if n_batch > n:
        raise ValueError(f"n_batch {n_batch} exceeds the {n} available sections")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), int(epoch_index)]))
    perm = rng.permutation(n)
    n_full = n // n_batch
    return [Batch(perm[i * n_batch:(i + 1) * n_batch]) for i in range(n_full)]
