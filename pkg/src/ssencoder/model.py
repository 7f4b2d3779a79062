"""State-space model with a history encoder.

Three residual nets make up the model:

  encoder_net:  (last n_a outputs, last n_b inputs) -> initial state estimate
  state_net:    (state, input) -> next state
  output_net:   (state, input) -> output

encode/step/output work in normalized signal space; simulate accepts and
returns physical units (the normalizers fitted at training time are part of
the model).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .data import Dataset, Normalizer
from .net import ParamVector, ResidualNet, forward, forward_batch, backward_batch, init_net

FORMAT_NAME = "ssencoder-model"
FORMAT_VERSION = 1

_DTYPES = {"f64": np.float64, "f32": np.float32}


class ModelFormatError(ValueError):
    """Raised for unreadable or version-mismatched model files."""


class SSEncoderModel:
    """Encoder-initialized nonlinear state-space model."""

    def __init__(self, encoder_net: ResidualNet, state_net: ResidualNet,
                 output_net: ResidualNet, n_x: int, n_u: int, n_y: int,
                 n_a: int, n_b: int, u_norm: Optional[Normalizer] = None,
                 y_norm: Optional[Normalizer] = None):
        self.encoder_net = encoder_net
        self.state_net = state_net
        self.output_net = output_net
        self.n_x, self.n_u, self.n_y = int(n_x), int(n_u), int(n_y)
        self.n_a, self.n_b = int(n_a), int(n_b)
        self.u_norm = u_norm if u_norm is not None else Normalizer.identity(n_u)
        self.y_norm = y_norm if y_norm is not None else Normalizer.identity(n_y)
        self._check()

    def _check(self):
        if min(self.n_x, self.n_u, self.n_y, self.n_a, self.n_b) < 1:
            raise ValueError("all model dimensions must be >= 1")
        expect = {
            "encoder_net": (self.n_a * self.n_y + self.n_b * self.n_u, self.n_x),
            "state_net": (self.n_x + self.n_u, self.n_x),
            "output_net": (self.n_x + self.n_u, self.n_y),
        }
        for name, (n_in, n_out) in expect.items():
            net = getattr(self, name)
            if (net.n_in, net.n_out) != (n_in, n_out):
                raise ValueError(
                    f"{name} has dims ({net.n_in}, {net.n_out}), expected ({n_in}, {n_out})"
                )
        if not (self.state_net.dtype == self.output_net.dtype == self.encoder_net.dtype):
            raise ValueError("net dtypes differ")
        if self.u_norm.n_channels != self.n_u or self.y_norm.n_channels != self.n_y:
            raise ValueError("normalizer channel counts do not match model dims")

    # -- basic properties ---------------------------------------------------

    @property
    def dtype(self):
        return self.state_net.dtype

    @property
    def warmup(self) -> int:
        """Samples consumed by the encoder before the free run starts."""
        return max(self.n_a, self.n_b)

    def nets(self) -> list[tuple[str, ResidualNet]]:
        return [("encoder", self.encoder_net), ("state", self.state_net),
                ("output", self.output_net)]

    def param_vector(self) -> ParamVector:
        items = []
        for prefix, net in self.nets():
            items += [(f"{prefix}.{n}", a) for n, a in net.param_items()]
        return ParamVector(items)

    def zero_grads(self):
        return tuple(net.zero_grads() for _, net in self.nets())

    def pack_grads(self, grads) -> np.ndarray:
        """Flatten an (encoder, state, output) NetGrads triple."""
        arrays = []
        for g in grads:
            arrays += g.arrays()
        return np.concatenate([a.ravel() for a in arrays])

    def copy(self) -> "SSEncoderModel":
        return SSEncoderModel(
            self.encoder_net.copy(), self.state_net.copy(), self.output_net.copy(),
            self.n_x, self.n_u, self.n_y, self.n_a, self.n_b,
            Normalizer(self.u_norm.mean.copy(), self.u_norm.std.copy()),
            Normalizer(self.y_norm.mean.copy(), self.y_norm.std.copy()),
        )

    # -- core operations (normalized space) ----------------------------------

    def encode(self, y_hist, u_hist) -> np.ndarray:
        """Estimate the current state from history windows, oldest first."""
        z = np.concatenate([
            self._hist(y_hist, self.n_a, self.n_y, "y_hist").ravel(),
            self._hist(u_hist, self.n_b, self.n_u, "u_hist").ravel(),
        ])
        out, _ = forward(self.encoder_net, z.astype(self.dtype))
        return out

    def _hist(self, arr, n_t, n_ch, what) -> np.ndarray:
        arr = np.asarray(arr, dtype=np.float64)
        if arr.ndim == 1 and n_ch == 1:
            arr = arr[:, None]
        if arr.shape != (n_t, n_ch):
            raise ValueError(f"{what} has shape {arr.shape}, expected ({n_t}, {n_ch})")
        return arr

    def step(self, x, u) -> np.ndarray:
        """Advance the state one sample."""
        out, _ = forward(self.state_net, self._xu(x, u))
        return out

    def output(self, x, u) -> np.ndarray:
        """Emit the output for the current state and input."""
        out, _ = forward(self.output_net, self._xu(x, u))
        return out

    def _xu(self, x, u) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64).ravel()
        u = np.asarray(u, dtype=np.float64).ravel()
        if x.shape != (self.n_x,):
            raise ValueError(f"state has shape {x.shape}, expected ({self.n_x},)")
        if u.shape != (self.n_u,):
            raise ValueError(f"input has shape {u.shape}, expected ({self.n_u},)")
        return np.concatenate([x, u]).astype(self.dtype)

    # -- simulation -----------------------------------------------------------

    def simulate(self, d: Dataset, init: Union[str, np.ndarray] = "encoder") -> np.ndarray:
        """Free-run the model over a dataset; returns predictions in physical units.

        init "encoder": the state at t0 = max(n_a, n_b) comes from the encoder
        applied to the first samples; predictions cover t0..N-1.
        init "zero": start at t = 0 from the zero state; predictions cover 0..N-1.
        An explicit state vector starts the free run at t0 like "encoder".
        """
        if d.n_u != self.n_u or d.n_y != self.n_y:
            raise ValueError("dataset channel counts do not match the model")
        un = self.u_norm.apply(d.u).astype(self.dtype)
        if isinstance(init, str) and init == "zero":
            t0 = 0
            x0 = np.zeros((1, self.n_x), dtype=self.dtype)
        else:
            t0 = self.warmup
            if d.n_samples <= t0:
                raise ValueError(
                    f"dataset has {d.n_samples} samples; encoder init needs more than {t0}"
                )
            if isinstance(init, str):
                if init != "encoder":
                    raise ValueError(f"unknown init {init!r}")
                yn = self.y_norm.apply(d.y).astype(self.dtype)
                enc = _encoder_inputs(self, un, yn, np.array([t0]))
                x0, _ = forward_batch(self.encoder_net, enc)
            else:
                x0 = np.asarray(init, dtype=self.dtype).reshape(1, self.n_x)
        yhat, _ = _free_run(self, un, x0, np.array([t0]), d.n_samples - t0, need_tape=False)
        return self.y_norm.invert(yhat[:, 0, :].astype(np.float64))

    def rollout(self, t_i: int, d: Dataset, T: int, k0: int = 0):
        """Encoder-initialized unroll of one section; returns normalized-space
        predictions for the scored steps k = k0..T+k0 and the tape chain."""
        if T < 0 or k0 < 0:
            raise ValueError("T and k0 must be >= 0")
        if not (self.warmup <= t_i and t_i + T + k0 <= d.n_samples - 1):
            raise ValueError(
                f"section start {t_i} out of range for horizon T={T}, k0={k0}, "
                f"N={d.n_samples}"
            )
        un = self.u_norm.apply(d.u).astype(self.dtype)
        yn = self.y_norm.apply(d.y).astype(self.dtype)
        yhat, tapes = rollout_forward(self, un, yn, np.array([t_i]), T, k0, need_tape=True)
        return yhat[k0:, 0, :], tapes

    # -- serialization ----------------------------------------------------------

    def to_dict(self) -> dict:
        prec = "f32" if self.dtype == np.float32 else "f64"
        return {
            "format": FORMAT_NAME,
            "format_version": FORMAT_VERSION,
            "precision": prec,
            "dims": {"n_x": self.n_x, "n_u": self.n_u, "n_y": self.n_y,
                     "n_a": self.n_a, "n_b": self.n_b},
            "normalizers": {
                "u": {"mean": self.u_norm.mean.tolist(), "std": self.u_norm.std.tolist()},
                "y": {"mean": self.y_norm.mean.tolist(), "std": self.y_norm.std.tolist()},
            },
            "nets": {name: _net_to_dict(net) for name, net in self.nets()},
        }

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)
            fh.write("\n")

    @classmethod
    def from_dict(cls, doc: dict) -> "SSEncoderModel":
        if not isinstance(doc, dict) or doc.get("format") != FORMAT_NAME:
            raise ModelFormatError("not a model file")
        if doc.get("format_version") != FORMAT_VERSION:
            raise ModelFormatError(
                f"model format version {doc.get('format_version')!r} not supported "
                f"(expected {FORMAT_VERSION})"
            )
        try:
            dtype = _DTYPES[doc["precision"]]
            dims = doc["dims"]
            norms = doc["normalizers"]
            nets = {name: _net_from_dict(doc["nets"][name], dtype)
                    for name in ("encoder", "state", "output")}
            return cls(
                nets["encoder"], nets["state"], nets["output"],
                dims["n_x"], dims["n_u"], dims["n_y"], dims["n_a"], dims["n_b"],
                Normalizer(norms["u"]["mean"], norms["u"]["std"]),
                Normalizer(norms["y"]["mean"], norms["y"]["std"]),
            )
        except (KeyError, TypeError) as exc:
            raise ModelFormatError(f"malformed model file: {exc}") from exc

    @classmethod
    def load(cls, path) -> "SSEncoderModel":
        with open(path) as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ModelFormatError(f"not valid JSON: {exc}") from exc
        return cls.from_dict(doc)


def _net_to_dict(net: ResidualNet) -> dict:
    return {
        "dims": [net.n_in, list(net.hidden_widths), net.n_out],
        "init": net.meta or None,
        "hidden": [{"weight": w.tolist(), "bias": b.tolist()}
                   for w, b in zip(net.hidden_w, net.hidden_b)],
        "out_weight": None if net.w_out is None else net.w_out.tolist(),
        "bypass_weight": net.w_bypass.tolist(),
        "bypass_bias": net.b_bypass.tolist(),
    }


def _net_from_dict(doc: dict, dtype) -> ResidualNet:
    return ResidualNet(
        [np.asarray(h["weight"], dtype=dtype) for h in doc["hidden"]],
        [np.asarray(h["bias"], dtype=dtype) for h in doc["hidden"]],
        None if doc["out_weight"] is None else np.asarray(doc["out_weight"], dtype=dtype),
        np.asarray(doc["bypass_weight"], dtype=dtype),
        np.asarray(doc["bypass_bias"], dtype=dtype),
        meta=doc.get("init") or {},
    )


def build_model(n_x: int, n_u: int, n_y: int, n_a: int, n_b: int,
                hidden=(15,), seed: int = 0, init_rule: str = "standard",
                dtype=np.float64) -> SSEncoderModel:
    """Construct a freshly initialized model; deterministic given the seed.

    All three nets share the hidden-layer spec and are initialized from
    independent streams derived from the seed.
    """
    sub = np.random.SeedSequence(seed).generate_state(3)
    e = init_net(n_a * n_y + n_b * n_u, hidden, n_x, int(sub[0]), init_rule, dtype)
    f = init_net(n_x + n_u, hidden, n_x, int(sub[1]), init_rule, dtype)
    h = init_net(n_x + n_u, hidden, n_y, int(sub[2]), init_rule, dtype)
    return SSEncoderModel(e, f, h, n_x, n_u, n_y, n_a, n_b)


# ---------------------------------------------------------------------------
# batched rollout machinery (normalized space), shared by loss and metrics

@dataclass
class RolloutTapes:
    """Tape chain of one batched rollout, consumed by rollout_backward."""

    tape_e: object
    tapes_h: list
    tapes_f: list
    starts: np.ndarray
    T: int
    k0: int


def _encoder_inputs(m: SSEncoderModel, un, yn, starts) -> np.ndarray:
    """History windows [y oldest..newest, u oldest..newest], flattened
    time-major with channels contiguous per time step."""
    B = starts.shape[0]
    yidx = starts[:, None] + np.arange(-m.n_a, 0)[None, :]
    uidx = starts[:, None] + np.arange(-m.n_b, 0)[None, :]
    return np.concatenate([yn[yidx].reshape(B, -1), un[uidx].reshape(B, -1)], axis=1)


def _free_run(m: SSEncoderModel, un, x0, starts, n_steps, need_tape):
    """Unroll output/state evaluations from given initial states.

    un: (N, n_u) normalized inputs; x0: (B, n_x); starts: (B,) first input
    index per batch row. Returns (yhat (n_steps, B, n_y), (tapes_h, tapes_f)).
    """
    B = starts.shape[0]
    yhat = np.empty((n_steps, B, m.n_y), dtype=m.dtype)
    tapes_h, tapes_f = [], []
    x = x0
    z_buf = None if need_tape else np.empty((B, m.n_x + m.n_u), dtype=m.dtype)
    for k in range(n_steps):
        z = np.empty((B, m.n_x + m.n_u), dtype=m.dtype) if need_tape else z_buf
        z[:, :m.n_x] = x
        z[:, m.n_x:] = un[starts + k]
        yh, th = forward_batch(m.output_net, z)
        yhat[k] = yh
        if need_tape:
            tapes_h.append(th)
        if k < n_steps - 1:
            x, tf = forward_batch(m.state_net, z)
            if need_tape:
                tapes_f.append(tf)
    return yhat, (tapes_h, tapes_f)


def rollout_forward(m: SSEncoderModel, un, yn, starts, T, k0, need_tape=True):
    """Encoder-initialized batched rollout; returns (yhat, RolloutTapes).

    yhat has shape (T+k0+1, B, n_y) covering every step k = 0..T+k0 in
    normalized space; the caller decides which steps are scored.
    """
    starts = np.asarray(starts, dtype=np.intp)
    enc = _encoder_inputs(m, un, yn, starts)
    x0, tape_e = forward_batch(m.encoder_net, enc)
    yhat, (tapes_h, tapes_f) = _free_run(m, un, x0, starts, T + k0 + 1, need_tape)
    tapes = RolloutTapes(tape_e, tapes_h, tapes_f, starts, T, k0) if need_tape else None
    return yhat, tapes


def rollout_backward(m: SSEncoderModel, tapes: RolloutTapes, dyhat, grads):
    """Backpropagate through a batched rollout, encoder included.

    dyhat: (T+k0+1, B, n_y) cotangents of the normalized predictions; entries
    for k < k0 must be zero (they are skipped). Gradients accumulate into the
    (encoder, state, output) NetGrads triple.
    """
    ge, gf, gh = grads
    n_steps = tapes.T + tapes.k0 + 1
    n_x = m.n_x
    dx = None
    for k in range(n_steps - 1, -1, -1):
        if k < n_steps - 1:
            dz_f, _ = backward_batch(m.state_net, tapes.tapes_f[k], dx, gf)
            dx_k = dz_f[:, :n_x]
        else:
            dx_k = None
        if k >= tapes.k0:
            dz_h, _ = backward_batch(m.output_net, tapes.tapes_h[k], dyhat[k], gh)
            dx = dz_h[:, :n_x] if dx_k is None else dx_k + dz_h[:, :n_x]
        else:
            # burn-in steps carry no output cotangent
            dx = np.zeros((dyhat.shape[1], n_x), dtype=m.dtype) if dx_k is None else dx_k
    if tapes.tape_e is not None:
        backward_batch(m.encoder_net, tapes.tape_e, np.ascontiguousarray(dx), ge)
    return grads
