"""Encoder-initialized multiple-shooting identification of nonlinear
state-space models from input/output time series."""

from .data import (
    Dataset,
    Normalizer,
    SyntheticSystem,
    duffing_system,
    fit_normalizer,
    generate,
    linear_system,
    load_csv,
    save_csv,
    split,
    wiener_system,
)
from .loss import (
    Batch,
    SectionSet,
    batch_loss,
    encoder_loss,
    make_epoch_batches,
    simulation_loss,
    valid_starts,
)
from .metrics import (
    MetricReport,
    NStepCurve,
    error_spectrum,
    evaluate_simulation,
    nrms,
    nstep_nrms,
)
from .model import ModelFormatError, SSEncoderModel, build_model
from .net import NetGrads, ParamVector, ResidualNet, backward, forward, init_net
from .optim import AdamState, TrainConfig, TrainLog, adam_step, refine_full, train

__version__ = "0.1.0"
