"""Evaluation metrics in physical units.

RMS and NRMS of a free-run prediction, the n-step error curve (how fast the
error grows after encoder initialization) and the frequency-domain spectrum
of the residual.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .data import Dataset
from .model import SSEncoderModel, _encoder_inputs, _free_run
from .net import forward_batch


@dataclass
class MetricReport:
    """RMS/NRMS of a prediction over the evaluated range [t0, t0+n)."""

    rms: float
    nrms: float
    sigma_y: float
    t0: int
    n: int


@dataclass
class NStepCurve:
    """NRMS after exactly n free-run steps, averaged over all start points."""

    values: np.ndarray
    n_sections: int
    sigma_y: float


def _combined_std(y: np.ndarray) -> float:
    """Population std combined over channels: sqrt(mean_t ||y_t - mean||^2)."""
    y = np.asarray(y, dtype=np.float64)
    resid = y - y.mean(axis=0)
    return float(np.sqrt(np.mean(np.sum(resid * resid, axis=1))))


def nrms(yhat, y, sigma_y: Optional[float] = None, t0: int = 0) -> MetricReport:
    """Root-mean-square residual and its ratio to the output deviation.

    sigma_y defaults to the population standard deviation of y over the
    evaluated range (channels combined by the Euclidean norm, matching the
    residual norm).
    """
    yhat = np.asarray(yhat, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if yhat.ndim == 1:
        yhat = yhat[:, None]
    if y.ndim == 1:
        y = y[:, None]
    if yhat.shape != y.shape or y.shape[0] < 1:
        raise ValueError(f"shape mismatch: {yhat.shape} vs {y.shape}")
    if sigma_y is None:
        sigma_y = _combined_std(y)
    sigma_y = float(sigma_y)
    if sigma_y == 0:
        raise ValueError("sigma_y is zero; NRMS is undefined")
    resid = yhat - y
    rms = float(np.sqrt(np.mean(np.sum(resid * resid, axis=1))))
    return MetricReport(rms=rms, nrms=rms / sigma_y, sigma_y=sigma_y,
                        t0=t0, n=y.shape[0])


def evaluate_simulation(m: SSEncoderModel, d: Dataset, init="encoder") -> MetricReport:
    """Free-run the model over a dataset and score the simulated range."""
    yhat = m.simulate(d, init=init)
    t0 = d.n_samples - yhat.shape[0]
    return nrms(yhat, d.y[t0:], t0=t0)


def nstep_nrms(m: SSEncoderModel, d: Dataset, n_max: int,
               chunk: int = 4096) -> NStepCurve:
    """Average the squared n-step residual over every possible start.

    For each start t_i the model is encoder-initialized and unrolled n_max
    steps; NRMS_n pools the step-n residuals over all starts and divides by
    the output std of the evaluated range (t >= max(n_a, n_b)).
    """
    if n_max < 0:
        raise ValueError("n_max must be >= 0")
    lo = m.warmup
    hi = d.n_samples - 1 - n_max
    if hi < lo:
        raise ValueError(
            f"dataset too short for n-step evaluation: need > {lo + n_max} samples"
        )
    starts_all = np.arange(lo, hi + 1, dtype=np.intp)
    un = m.u_norm.apply(d.u).astype(m.dtype)
    yn = m.y_norm.apply(d.y).astype(m.dtype)

    sq_sum = np.zeros(n_max + 1)
    steps = np.arange(n_max + 1, dtype=np.intp)
    for i in range(0, starts_all.size, chunk):
        starts = starts_all[i:i + chunk]
        enc = _encoder_inputs(m, un, yn, starts)
        x0, _ = forward_batch(m.encoder_net, enc)
        yhat_n, _ = _free_run(m, un, x0, starts, n_max + 1, need_tape=False)
        yhat = m.y_norm.invert(yhat_n.astype(np.float64))
        targets = d.y[starts[None, :] + steps[:, None]]
        resid = yhat - targets
        sq_sum += np.sum(resid * resid, axis=(1, 2))

    sigma_y = _combined_std(d.y[lo:])
    if sigma_y == 0:
        raise ValueError("sigma_y is zero; NRMS is undefined")
    values = np.sqrt(sq_sum / starts_all.size) / sigma_y
    return NStepCurve(values=values, n_sections=int(starts_all.size), sigma_y=sigma_y)


def error_spectrum(yhat, y, sample_period: Optional[float] = None):
    """One-sided DFT magnitudes of the residual and of the reference output.

    Returns (freqs, residual_mag, reference_mag) with one column per output
    channel; freqs are in Hz when sample_period is given, else cycles/sample.
    """
    yhat = np.asarray(yhat, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if yhat.ndim == 1:
        yhat = yhat[:, None]
    if y.ndim == 1:
        y = y[:, None]
    if yhat.shape != y.shape:
        raise ValueError(f"shape mismatch: {yhat.shape} vs {y.shape}")
    n = y.shape[0]
    if n < 2:
        raise ValueError("need at least 2 samples for a spectrum")
    freqs = np.fft.rfftfreq(n, d=sample_period if sample_period else 1.0)
    resid_mag = np.abs(np.fft.rfft(yhat - y, axis=0))
    ref_mag = np.abs(np.fft.rfft(y, axis=0))
    return freqs, resid_mag, ref_mag
