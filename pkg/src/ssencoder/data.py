"""Time-series datasets: CSV ingestion, normalization, splitting and
synthetic ground-truth generators.

A :class:`Dataset` is a pair of aligned input/output sample sequences in
physical units.  Normalization statistics are always fitted on the training
split only and applied unchanged to validation/test data.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np


def _as_samples(a) -> np.ndarray:
    """Coerce to (N, n_channels) float64; a 1-D vector is one channel."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise ValueError(f"expected 1-D or 2-D sample array, got shape {a.shape}")
    return a


@dataclass
class Dataset:
    """Aligned input/output samples, shape (N, n_u) and (N, n_y)."""

    u: np.ndarray
    y: np.ndarray
    sample_period: Optional[float] = None

    def __post_init__(self):
        self.u = _as_samples(self.u)
        self.y = _as_samples(self.y)
        if self.u.shape[0] != self.y.shape[0]:
            raise ValueError(
                f"u and y sample counts differ: {self.u.shape[0]} vs {self.y.shape[0]}"
            )
        if self.n_samples < 1:
            raise ValueError("dataset needs at least one sample")
        if not np.all(np.isfinite(self.u)) or not np.all(np.isfinite(self.y)):
            raise ValueError("dataset contains NaN or Inf values")

    @property
    def n_samples(self) -> int:
        return self.u.shape[0]

    @property
    def n_u(self) -> int:
        return self.u.shape[1]

    @property
    def n_y(self) -> int:
        return self.y.shape[1]


@dataclass
class Normalizer:
    """Per-channel affine map x -> (x - mean) / std with strictly positive std."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64).ravel()
        self.std = np.asarray(self.std, dtype=np.float64).ravel()
        if self.mean.shape != self.std.shape:
            raise ValueError("mean and std must have the same number of channels")
        if np.any(self.std <= 0):
            raise ValueError("std must be strictly positive on every channel")

    @property
    def n_channels(self) -> int:
        return self.mean.shape[0]

    def apply(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x) - self.mean) / self.std

    def invert(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x) * self.std + self.mean

    @classmethod
    def identity(cls, n_channels: int) -> "Normalizer":
        return cls(np.zeros(n_channels), np.ones(n_channels))


def fit_normalizer(d: Dataset) -> tuple[Normalizer, Normalizer]:
    """Fit per-channel (mean, population std) normalizers for u and y.

    Raises on constant channels: a zero standard deviation would make the
    normalization map non-invertible.
    """
    if d.n_samples < 2:
        raise ValueError("need at least 2 samples to fit a normalizer")
    out = []
    for name, arr in (("u", d.u), ("y", d.y)):
        mean = arr.mean(axis=0)
        std = arr.std(axis=0)  # population (1/N) convention
        bad = np.flatnonzero(std == 0)
        if bad.size:
            raise ValueError(f"constant {name} channel(s) {bad.tolist()}: zero variance")
        out.append(Normalizer(mean, std))
    return out[0], out[1]


# ---------------------------------------------------------------------------
# CSV ingestion

def _expected_header(n_u: int, n_y: int) -> list[str]:
    return [f"u{i + 1}" for i in range(n_u)] + [f"y{i + 1}" for i in range(n_y)]


def load_csv(path, n_u: int, n_y: int) -> Dataset:
    """Load a dataset from CSV with header u1..u{n_u},y1..y{n_y}.

    Rows with missing or non-numeric fields are rejected with the offending
    row number (1-based, counting the header as row 1).
    """
    expected = _expected_header(n_u, n_y)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        header = [c.strip() for c in header]
        if header != expected:
            raise ValueError(
                f"{path}: header mismatch, expected {','.join(expected)} "
                f"got {','.join(header)}"
            )
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(expected):
                raise ValueError(f"{path}: row {lineno} has {len(row)} fields, expected {len(expected)}")
            try:
                vals = [float(c) for c in row]
            except ValueError:
                raise ValueError(f"{path}: non-numeric value in row {lineno}") from None
            if not all(np.isfinite(vals)):
                raise ValueError(f"{path}: non-finite value in row {lineno}")
            rows.append(vals)
    if not rows:
        raise ValueError(f"{path}: no data rows")
    arr = np.asarray(rows, dtype=np.float64)
    return Dataset(u=arr[:, :n_u], y=arr[:, n_u:])


def save_csv(d: Dataset, path) -> None:
    """Write a dataset in the load_csv format with full float round-trip precision."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(_expected_header(d.n_u, d.n_y))
        for i in range(d.n_samples):
            writer.writerow([repr(float(v)) for v in d.u[i]] + [repr(float(v)) for v in d.y[i]])


def split(d: Dataset, boundaries: Sequence[tuple[int, int]]) -> list[Dataset]:
    """Slice a dataset into [start, stop) index ranges.

    Ranges must be in-bounds and non-overlapping; sample order and metadata
    are preserved.
    """
    seen = []
    for start, stop in boundaries:
        if not (0 <= start < stop <= d.n_samples):
            raise ValueError(f"range [{start}, {stop}) out of bounds for {d.n_samples} samples")
        for s0, s1 in seen:
            if start < s1 and s0 < stop:
                raise ValueError(f"range [{start}, {stop}) overlaps [{s0}, {s1})")
        seen.append((start, stop))
    return [
        Dataset(u=d.u[start:stop].copy(), y=d.y[start:stop].copy(), sample_period=d.sample_period)
        for start, stop in boundaries
    ]


# ---------------------------------------------------------------------------
# Synthetic ground-truth systems

_KINDS = ("linear-ss", "wiener", "duffing")


@dataclass
class SyntheticSystem:
    """A known data-generating system used as a test oracle.

    kind "linear-ss": parameters A, B, C, D, state recursion
        x[t+1] = A x[t] + B u[t],  y[t] = C x[t] + D u[t].
    kind "wiener": parameters A, B, C, D of a linear filter whose scalar
        output is passed through a static nonlinearity ("tanh" or "cubic").
    kind "duffing": forced Duffing oscillator
        x'' + delta x' + alpha x + beta x^3 = gamma u(t)
        discretized with fixed-step RK4 (zero-order-hold input), y = x.

    Gaussian output noise of standard deviation ``noise_std`` is added to y.
    """

    kind: str
    true_state_dim: int
    parameters: dict = field(default_factory=dict)
    noise_std: float = 0.0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown system kind {self.kind!r}, expected one of {_KINDS}")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")


def linear_system(A, B, C, D, noise_std: float = 0.0) -> SyntheticSystem:
    A, B, C, D = (np.atleast_2d(np.asarray(m, dtype=np.float64)) for m in (A, B, C, D))
    return SyntheticSystem(
        kind="linear-ss",
        true_state_dim=A.shape[0],
        parameters={"A": A, "B": B, "C": C, "D": D},
        noise_std=noise_std,
    )


def wiener_system(A, B, C, D, nonlinearity: str = "tanh", noise_std: float = 0.0) -> SyntheticSystem:
    A, B, C, D = (np.atleast_2d(np.asarray(m, dtype=np.float64)) for m in (A, B, C, D))
    if nonlinearity not in ("tanh", "cubic"):
        raise ValueError(f"unknown nonlinearity {nonlinearity!r}")
    return SyntheticSystem(
        kind="wiener",
        true_state_dim=A.shape[0],
        parameters={"A": A, "B": B, "C": C, "D": D, "nonlinearity": nonlinearity},
        noise_std=noise_std,
    )


def duffing_system(
    alpha: float = 1.0,
    beta: float = 5.0,
    delta: float = 0.4,
    gamma: float = 1.0,
    dt: float = 0.1,
    substeps: int = 1,
    noise_std: float = 0.0,
) -> SyntheticSystem:
    if dt <= 0 or substeps < 1:
        raise ValueError("dt must be > 0 and substeps >= 1")
    return SyntheticSystem(
        kind="duffing",
        true_state_dim=2,
        parameters={
            "alpha": float(alpha),
            "beta": float(beta),
            "delta": float(delta),
            "gamma": float(gamma),
            "dt": float(dt),
            "substeps": int(substeps),
        },
        noise_std=noise_std,
    )


def _check_stable(A: np.ndarray) -> None:
    rho = np.max(np.abs(np.linalg.eigvals(A)))
    if rho >= 1.0:
        raise ValueError(f"unstable state matrix: spectral radius {rho:.6g} >= 1")


def _simulate_linear(A, B, C, D, u: np.ndarray) -> np.ndarray:
    n = u.shape[0]
    x = np.zeros(A.shape[0])
    y = np.empty((n, C.shape[0]))
    for t in range(n):
        y[t] = C @ x + D @ u[t]
        x = A @ x + B @ u[t]
    return y


def _simulate_duffing(p: dict, u: np.ndarray) -> np.ndarray:
    alpha, beta, delta, gamma = p["alpha"], p["beta"], p["delta"], p["gamma"]
    h = p["dt"] / p["substeps"]

    def deriv(s, force):
        return np.array([s[1], force - delta * s[1] - alpha * s[0] - beta * s[0] ** 3])

    n = u.shape[0]
    state = np.zeros(2)
    y = np.empty((n, 1))
    for t in range(n):
        y[t, 0] = state[0]
        force = gamma * u[t, 0]  # held constant over the sample interval
        for _ in range(p["substeps"]):
            k1 = deriv(state, force)
            k2 = deriv(state + 0.5 * h * k1, force)
            k3 = deriv(state + 0.5 * h * k2, force)
            k4 = deriv(state + h * k3, force)
            state = state + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return y


def generate(sys: SyntheticSystem, u, seed: int) -> Dataset:
    """Simulate a synthetic system from zero initial state.

    The output is y_true + Gaussian noise of std ``sys.noise_std`` drawn from
    a generator seeded with ``seed``; the result is a pure function of
    (sys, u, seed).
    """
    u = _as_samples(u)
    if not np.all(np.isfinite(u)):
        raise ValueError("input sequence contains NaN or Inf")

    p = sys.parameters
    if sys.kind == "linear-ss":
        _check_stable(p["A"])
        y = _simulate_linear(p["A"], p["B"], p["C"], p["D"], u)
    elif sys.kind == "wiener":
        _check_stable(p["A"])
        lin = _simulate_linear(p["A"], p["B"], p["C"], p["D"], u)
        y = np.tanh(lin) if p["nonlinearity"] == "tanh" else lin - 0.1 * lin**3
    else:
        y = _simulate_duffing(p, u)

    if sys.noise_std > 0:
        rng = np.random.default_rng(seed)
        y = y + sys.noise_std * rng.standard_normal(y.shape)
    sample_period = p["dt"] if sys.kind == "duffing" else None
    return Dataset(u=u, y=y, sample_period=sample_period)
