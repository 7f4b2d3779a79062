"""Adam optimization, the training loop with early stopping, and the
optional final full-data refinement.

Training is fully deterministic given (config, data): model snapshots are
taken whenever the validation free-run NRMS reaches a new minimum, and the
best snapshot is returned.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .data import Dataset, fit_normalizer
from .loss import SectionSet, _sections_loss_grad, make_epoch_batches, \
    simulation_loss, valid_starts
from .metrics import evaluate_simulation
from .model import SSEncoderModel

MODES = ("encoder-batch", "encoder-full", "simulation")
PRECISIONS = {"f64": np.float64, "f32": np.float32}


@dataclass
class AdamState:
    """First/second moment accumulators plus hyperparameters."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0
    alpha: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    skipped_steps: int = 0

    @classmethod
    def new(cls, size: int, alpha: float = 1e-3, beta1: float = 0.9,
            beta2: float = 0.999, eps: float = 1e-8, dtype=np.float64) -> "AdamState":
        return cls(m=np.zeros(size, dtype=dtype), v=np.zeros(size, dtype=dtype),
                   alpha=alpha, beta1=beta1, beta2=beta2, eps=eps)


def adam_step(state: AdamState, params: np.ndarray, grad: np.ndarray):
    """One bias-corrected Adam update; returns the updated (state, params).

    A non-finite gradient skips the step (counted in state.skipped_steps)
    instead of poisoning the parameters.
    """
    if params.shape != state.m.shape or grad.shape != state.m.shape:
        raise ValueError(
            f"shape mismatch: params {params.shape}, grad {grad.shape}, "
            f"state {state.m.shape}"
        )
    if not np.all(np.isfinite(grad)):
        state.skipped_steps += 1
        return state, params
    state.t += 1
    state.m *= state.beta1
    state.m += (1.0 - state.beta1) * grad
    state.v *= state.beta2
    state.v += (1.0 - state.beta2) * grad * grad
    m_hat = state.m / (1.0 - state.beta1 ** state.t)
    v_hat = state.v / (1.0 - state.beta2 ** state.t)
    params = params - state.alpha * m_hat / (np.sqrt(v_hat) + state.eps)
    return state, params


@dataclass
class TrainConfig:
    """Everything that determines a training run (besides the data)."""

    n_x: int
    n_a: int
    n_b: int
    T: int
    k0: int = 0
    hidden: tuple = (15,)
    n_batch: int = 256
    learning_rate: float = 1e-3
    max_epochs: int = 100
    seed: int = 0
    precision: str = "f64"
    mode: str = "encoder-batch"
    final_refine_epochs: int = 0
    init_rule: str = "standard"
    val_init: Optional[str] = None  # default: follow the training mode
    sim_init: str = "encoder"
    max_seconds: Optional[float] = None  # wall-clock budget; breaks determinism
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def validate(self) -> None:
        for name in ("n_x", "n_a", "n_b"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        for name in ("T", "k0", "max_epochs", "final_refine_epochs", "seed"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.n_batch < 1:
            raise ValueError("n_batch must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.precision not in PRECISIONS:
            raise ValueError(f"precision must be one of {tuple(PRECISIONS)}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.sim_init not in ("encoder", "zero"):
            raise ValueError("sim_init must be encoder or zero")
        if self.val_init not in (None, "encoder", "zero"):
            raise ValueError("val_init must be encoder or zero")
        if any(h < 1 for h in self.hidden):
            raise ValueError("hidden widths must be >= 1")

    @property
    def dtype(self):
        return PRECISIONS[self.precision]

    def resolved_val_init(self) -> str:
        if self.val_init is not None:
            return self.val_init
        if self.mode == "simulation" and self.sim_init == "zero":
            return "zero"
        return "encoder"


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_nrms: float
    seconds: float
    is_best: bool


@dataclass
class TrainLog:
    """Per-epoch training history."""

    records: list = field(default_factory=list)

    @property
    def best_epoch(self) -> Optional[int]:
        best = None
        for r in self.records:
            if r.is_best:
                best = r.epoch
        return best

    @property
    def best_val_nrms(self) -> Optional[float]:
        vals = [r.val_nrms for r in self.records if np.isfinite(r.val_nrms)]
        return min(vals) if vals else None

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "train_loss", "val_nrms", "seconds", "is_best"])
            for r in self.records:
                w.writerow([r.epoch, repr(r.train_loss), repr(r.val_nrms),
                            repr(r.seconds), int(r.is_best)])

    @classmethod
    def from_csv(cls, path) -> "TrainLog":
        log = cls()
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            for row in reader:
                log.records.append(EpochRecord(
                    epoch=int(row["epoch"]),
                    train_loss=float(row["train_loss"]),
                    val_nrms=float(row["val_nrms"]),
                    seconds=float(row["seconds"]),
                    is_best=bool(int(row["is_best"])),
                ))
        return log


def _epoch_updates(work, un, yn, sections, params, pv, adam, cfg, epoch, train_data):
    """Run one epoch of updates; returns (params, mean train loss)."""
    losses = []
    if cfg.mode == "encoder-batch":
        batches = make_epoch_batches(sections.starts, cfg.n_batch, cfg.seed, epoch)
        for batch in batches:
            starts = sections.starts[batch.indices]
            loss, grad = _sections_loss_grad(
                work, un, yn, starts, sections.T, sections.k0, denom=len(batch))
            adam, params = adam_step(adam, params, grad)
            pv.load(params)
            losses.append(loss)
    elif cfg.mode == "encoder-full":
        loss, grad = _sections_loss_grad(
            work, un, yn, sections.starts, sections.T, sections.k0,
            denom=len(sections))
        adam, params = adam_step(adam, params, grad)
        pv.load(params)
        losses.append(loss)
    else:  # simulation
        loss, grad = simulation_loss(work, train_data, init=cfg.sim_init)
        adam, params = adam_step(adam, params, grad)
        pv.load(params)
        losses.append(loss)
    mean_loss = float(np.mean(losses))
    if not any(np.isfinite(l) for l in losses):
        raise RuntimeError(f"all losses non-finite in epoch {epoch}")
    return params, mean_loss


def train(model: SSEncoderModel, train_data: Dataset, val_data: Dataset,
          cfg: TrainConfig):
    """Train a model; returns (best snapshot, TrainLog).

    Normalizers are fitted on the training data and baked into the model
    before the first update. After every epoch the validation free-run NRMS
    is computed and the model snapshotted on every new minimum. The input
    model is left untouched; training happens on a copy.
    """
    cfg.validate()
    if model.dtype != cfg.dtype:
        raise ValueError(f"model dtype {model.dtype} does not match cfg precision {cfg.precision}")
    work = model.copy()
    work.u_norm, work.y_norm = fit_normalizer(train_data)

    starts = valid_starts(train_data, work.n_a, work.n_b, cfg.T, cfg.k0)
    sections = SectionSet(starts, cfg.T, cfg.k0)
    if cfg.mode == "encoder-batch" and cfg.n_batch > len(sections):
        raise ValueError(
            f"n_batch {cfg.n_batch} exceeds the {len(sections)} available sections")
    val_init = cfg.resolved_val_init()
    if val_init == "encoder" and val_data.n_samples <= work.warmup:
        raise ValueError("validation set too short for encoder-initialized scoring")

    un = work.u_norm.apply(train_data.u).astype(work.dtype)
    yn = work.y_norm.apply(train_data.y).astype(work.dtype)

    pv = work.param_vector()
    params = pv.flatten()
    adam = AdamState.new(pv.size, cfg.learning_rate, cfg.adam_beta1,
                         cfg.adam_beta2, cfg.adam_eps, dtype=work.dtype)

    log = TrainLog()
    best = work.copy()
    best_nrms = np.inf
    t_start = time.perf_counter()
    for epoch in range(cfg.max_epochs):
        t_epoch = time.perf_counter()
        params, mean_loss = _epoch_updates(
            work, un, yn, sections, params, pv, adam, cfg, epoch, train_data)
        val_nrms = evaluate_simulation(work, val_data, init=val_init).nrms
        is_best = val_nrms < best_nrms
        if is_best:
            best_nrms = val_nrms
            best = work.copy()
        log.records.append(EpochRecord(
            epoch=epoch, train_loss=mean_loss, val_nrms=val_nrms,
            seconds=time.perf_counter() - t_epoch, is_best=is_best))
        if cfg.max_seconds is not None and time.perf_counter() - t_start >= cfg.max_seconds:
            break
    return best, log


def refine_full(model: SSEncoderModel, train_data: Dataset, val_data: Dataset,
                cfg: TrainConfig):
    """Full-gradient polish over all sections; keeps the result only if the
    validation NRMS improves on the input model."""
    if cfg.final_refine_epochs == 0:
        return model
    full_cfg = replace(cfg, mode="encoder-full",
                       max_epochs=cfg.final_refine_epochs, max_seconds=None,
                       final_refine_epochs=0)
    val_init = cfg.resolved_val_init()
    base_nrms = evaluate_simulation(model, val_data, init=val_init).nrms
    refined, _ = train(model, train_data, val_data, full_cfg)
    refined_nrms = evaluate_simulation(refined, val_data, init=val_init).nrms
    return refined if refined_nrms < base_nrms else model
