"""Spiking neural network regression toolkit for material modeling."""

from .codec import DecoderState, constant_current_encode, decode_step, population_vote
from .network import ForwardRecord, LayerSpec, NetworkSpec, forward, init_params, make_preset
from .neurons import (
    LifParams,
    LifState,
    SlstmParams,
    SlstmState,
    lif_step,
    slstm_step,
    spike_activation,
    surrogate,
    surrogate_grad,
)
from .training import TrainConfig, TrainReport, bptt_backward, train

__all__ = [
    "DecoderState",
    "ForwardRecord",
    "LayerSpec",
    "LifParams",
    "LifState",
    "NetworkSpec",
    "SlstmParams",
    "SlstmState",
    "TrainConfig",
    "TrainReport",
    "bptt_backward",
    "constant_current_encode",
    "decode_step",
    "forward",
    "init_params",
    "lif_step",
    "make_preset",
    "population_vote",
    "slstm_step",
    "spike_activation",
    "surrogate",
    "surrogate_grad",
    "train",
]

__version__ = "0.1.0"
