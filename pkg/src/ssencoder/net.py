"""Residual MLPs with exact reverse-mode gradients.

The network is a tanh MLP with an affine bypass running in parallel from the
input straight to the output:

    z_out = w_out @ tanh-path(z_in) + w_bypass @ z_in + b_bypass

With zero hidden layers the tanh path disappears and the net degenerates to
the affine map w_bypass @ z_in + b_bypass, which doubles as the built-in
linear baseline.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np

from ._kernels import get_backend

INIT_RULES = ("standard", "paper")


@dataclass
class NetGrads:
    """Gradient buffers mirroring a net's parameter arrays."""

    hidden_w: list
    hidden_b: list
    w_out: Optional[np.ndarray]
    w_bypass: np.ndarray
    b_bypass: np.ndarray

    def arrays(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.hidden_w, self.hidden_b):
            out += [w, b]
        if self.w_out is not None:
            out.append(self.w_out)
        out += [self.w_bypass, self.b_bypass]
        return out


class Tape(NamedTuple):
    """Cached activations from one forward call; consumed by backward."""

    net: "ResidualNet"
    z: np.ndarray
    hs: list


class ResidualNet:
    """Tanh MLP plus affine bypass; parameters are plain numpy arrays."""

    def __init__(self, hidden_w, hidden_b, w_out, w_bypass, b_bypass, meta=None):
        self.hidden_w = [np.asarray(w) for w in hidden_w]
        self.hidden_b = [np.asarray(b) for b in hidden_b]
        self.w_out = None if w_out is None else np.asarray(w_out)
        self.w_bypass = np.asarray(w_bypass)
        self.b_bypass = np.asarray(b_bypass)
        self.meta = dict(meta) if meta else {}
        self._check_shapes()

    def _check_shapes(self):
        if len(self.hidden_w) != len(self.hidden_b):
            raise ValueError("hidden weight/bias counts differ")
        prev = self.n_in
        for l, (w, b) in enumerate(zip(self.hidden_w, self.hidden_b)):
            if w.ndim != 2 or w.shape[1] != prev or b.shape != (w.shape[0],):
                raise ValueError(f"hidden layer {l} shapes inconsistent: {w.shape}, {b.shape}")
            if w.shape[0] < 1:
                raise ValueError(f"hidden layer {l} has zero width")
            prev = w.shape[0]
        if self.hidden_w:
            if self.w_out is None or self.w_out.shape != (self.n_out, prev):
                raise ValueError("output weight shape inconsistent with hidden widths")
        elif self.w_out is not None:
            raise ValueError("output weight given but there are no hidden layers")
        if self.b_bypass.shape != (self.n_out,):
            raise ValueError("bypass bias shape inconsistent")

    @property
    def n_in(self) -> int:
        return self.w_bypass.shape[1]

    @property
    def n_out(self) -> int:
        return self.w_bypass.shape[0]

    @property
    def hidden_widths(self) -> tuple:
        return tuple(w.shape[0] for w in self.hidden_w)

    @property
    def dims(self) -> tuple:
        return (self.n_in, self.hidden_widths, self.n_out)

    @property
    def dtype(self):
        return self.w_bypass.dtype

    def param_items(self) -> list[tuple[str, np.ndarray]]:
        """(name, array) pairs in a fixed, deterministic order."""
        items = []
        for l, (w, b) in enumerate(zip(self.hidden_w, self.hidden_b)):
            items += [(f"hidden{l}.weight", w), (f"hidden{l}.bias", b)]
        if self.w_out is not None:
            items.append(("out.weight", self.w_out))
        items += [("bypass.weight", self.w_bypass), ("bypass.bias", self.b_bypass)]
        return items

    def zero_grads(self) -> NetGrads:
        return NetGrads(
            hidden_w=[np.zeros_like(w) for w in self.hidden_w],
            hidden_b=[np.zeros_like(b) for b in self.hidden_b],
            w_out=None if self.w_out is None else np.zeros_like(self.w_out),
            w_bypass=np.zeros_like(self.w_bypass),
            b_bypass=np.zeros_like(self.b_bypass),
        )

    def copy(self) -> "ResidualNet":
        return ResidualNet(
            [w.copy() for w in self.hidden_w],
            [b.copy() for b in self.hidden_b],
            None if self.w_out is None else self.w_out.copy(),
            self.w_bypass.copy(),
            self.b_bypass.copy(),
            meta=self.meta,
        )

    def astype(self, dtype) -> "ResidualNet":
        return ResidualNet(
            [w.astype(dtype) for w in self.hidden_w],
            [b.astype(dtype) for b in self.hidden_b],
            None if self.w_out is None else self.w_out.astype(dtype),
            self.w_bypass.astype(dtype),
            self.b_bypass.astype(dtype),
            meta=self.meta,
        )


def init_net(
    n_in: int,
    hidden: Sequence[int],
    n_out: int,
    seed,
    rule: str = "standard",
    dtype=np.float64,
) -> ResidualNet:
    """Initialize a net with uniform U(-sqrt(k), sqrt(k)) weights and biases.

    Per layer of fan-in m: rule "standard" uses k = 1/m (the usual linear
    layer convention); rule "paper" uses k = 1/sqrt(m). Deterministic given
    (dims, seed, rule).
    """
    if rule not in INIT_RULES:
        raise ValueError(f"unknown init rule {rule!r}, expected one of {INIT_RULES}")
    hidden = tuple(int(h) for h in hidden)
    if n_in < 1 or n_out < 1 or any(h < 1 for h in hidden):
        raise ValueError(f"invalid dims ({n_in}, {hidden}, {n_out})")
    rng = np.random.default_rng(seed)

    def bound(fan_in):
        k = 1.0 / fan_in if rule == "standard" else 1.0 / np.sqrt(fan_in)
        return np.sqrt(k)

    def draw(shape, fan_in):
        b = bound(fan_in)
        return rng.uniform(-b, b, size=shape).astype(dtype)

    hidden_w, hidden_b = [], []
    prev = n_in
    for h in hidden:
        hidden_w.append(draw((h, prev), prev))
        hidden_b.append(draw((h,), prev))
        prev = h
    w_out = draw((n_out, prev), prev) if hidden else None
    w_bypass = draw((n_out, n_in), n_in)
    b_bypass = draw((n_out,), n_in)
    meta = {"init_rule": rule, "seed": _seed_repr(seed)}
    return ResidualNet(hidden_w, hidden_b, w_out, w_bypass, b_bypass, meta=meta)


def _seed_repr(seed):
    if isinstance(seed, (int, np.integer)):
        return int(seed)
    return str(seed)


# ---------------------------------------------------------------------------
# forward / backward

def _as_batch(z, n, what):
    z = np.asarray(z)
    if z.ndim == 1:
        z = z[None, :]
    if z.ndim != 2 or z.shape[1] != n:
        raise ValueError(f"{what} has shape {z.shape}, expected (*, {n})")
    return np.ascontiguousarray(z)


def forward_batch(net: ResidualNet, z: np.ndarray) -> tuple[np.ndarray, Tape]:
    """Evaluate the net on a (B, n_in) batch; returns (z_out, tape)."""
    z = _as_batch(z, net.n_in, "input")
    if z.dtype != net.dtype:
        z = z.astype(net.dtype)
    out, hs = get_backend().net_forward(
        net.hidden_w, net.hidden_b, net.w_out, net.w_bypass, net.b_bypass, z
    )
    return out, Tape(net, z, hs)


def backward_batch(net: ResidualNet, tape: Tape, dz_out: np.ndarray,
                   grads: Optional[NetGrads] = None) -> tuple[np.ndarray, NetGrads]:
    """Accumulate parameter gradients for a batch; returns (dz_in, grads)."""
    if tape.net is not net:
        raise ValueError("tape does not belong to this net")
    dz_out = _as_batch(dz_out, net.n_out, "output cotangent")
    if dz_out.shape[0] != tape.z.shape[0]:
        raise ValueError("cotangent batch size does not match the tape")
    if dz_out.dtype != net.dtype:
        dz_out = dz_out.astype(net.dtype)
    if grads is None:
        grads = net.zero_grads()
    dz_in = get_backend().net_backward(
        net.hidden_w, net.hidden_b, net.w_out, net.w_bypass,
        tape.z, tape.hs, dz_out,
        grads.hidden_w, grads.hidden_b, grads.w_out, grads.w_bypass, grads.b_bypass,
    )
    return dz_in, grads


def forward(net: ResidualNet, z_in) -> tuple[np.ndarray, Tape]:
    """Single-vector forward pass; returns (z_out (n_out,), tape)."""
    z_in = np.asarray(z_in)
    if z_in.ndim != 1:
        raise ValueError(f"expected a 1-D input vector, got shape {z_in.shape}")
    out, tape = forward_batch(net, z_in)
    return out[0], tape


def backward(net: ResidualNet, tape: Tape, dl_dzout) -> tuple[np.ndarray, NetGrads]:
    """Single-vector backward pass; returns (dl_dzin, parameter gradients)."""
    dl_dzout = np.asarray(dl_dzout)
    if dl_dzout.ndim != 1:
        raise ValueError(f"expected a 1-D cotangent, got shape {dl_dzout.shape}")
    dz, grads = backward_batch(net, tape, dl_dzout)
    return dz[0], grads


# ---------------------------------------------------------------------------
# flat parameter view

class ParamVector:
    """Stable flat view over a fixed set of named parameter arrays.

    Flatten/load is a bijection; the ordering is the construction order and
    is identical across runs for identically constructed nets.
    """

    def __init__(self, items: Sequence[tuple[str, np.ndarray]]):
        self._names = [name for name, _ in items]
        self._arrays = [arr for _, arr in items]
        self._offsets = np.cumsum([0] + [a.size for a in self._arrays])
        self.size = int(self._offsets[-1])

    @property
    def names(self) -> list[str]:
        return list(self._names)

    @property
    def dtype(self):
        return self._arrays[0].dtype

    def index_map(self) -> list[tuple[str, int, int]]:
        """(name, offset, size) for every array in flat order."""
        return [
            (n, int(self._offsets[i]), a.size)
            for i, (n, a) in enumerate(zip(self._names, self._arrays))
        ]

    def flatten(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self._arrays])

    def load(self, vec: np.ndarray) -> None:
        """Write a flat vector back into the underlying arrays in place."""
        vec = np.asarray(vec)
        if vec.shape != (self.size,):
            raise ValueError(f"expected shape ({self.size},), got {vec.shape}")
        for i, a in enumerate(self._arrays):
            a[...] = vec[self._offsets[i]:self._offsets[i + 1]].reshape(a.shape)

    def pack(self, arrays: Sequence[np.ndarray]) -> np.ndarray:
        """Flatten arrays that parallel the tracked ones (e.g. gradients)."""
        if len(arrays) != len(self._arrays):
            raise ValueError("array count mismatch")
        for a, ref in zip(arrays, self._arrays):
            if a.shape != ref.shape:
                raise ValueError(f"shape mismatch: {a.shape} vs {ref.shape}")
        return np.concatenate([a.ravel() for a in arrays])
