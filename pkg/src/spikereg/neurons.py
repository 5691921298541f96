"""Single-time-step neuron dynamics: LIF, RLIF and spiking LSTM.

Conventions
-----------
* Activations are batched: state vectors have shape ``[batch, units]``,
  inputs ``[batch, features]``.  1-D inputs are treated as batch size 1.
* Feed-forward weights ``W`` carry an absorbed bias: shape is
  ``[units, features + 1]`` and the input is augmented with a constant-1
  channel before projection.  Recurrent weights ``V`` act on the raw
  (un-augmented) previous-time activation of the preceding layer.
* Spikes are exactly 0.0 or 1.0 in hard mode.  In smooth mode the spike
  is replaced by ``0.5 + (1/pi) * arctan(pi * (U - U_thr))``, whose
  derivative equals :func:`surrogate_grad`; this mode exists so gradients
  can be verified against finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError


def augment(x: np.ndarray) -> np.ndarray:
    """Append a constant-1 channel (absorbed bias) to the last axis."""
    ones = np.ones(x.shape[:-1] + (1,), dtype=np.float64)
    return np.concatenate([x, ones], axis=-1)


def spike_activation(membrane: np.ndarray, threshold: np.ndarray) -> np.ndarray:
    """Hard threshold: 1.0 where ``membrane >= threshold`` else 0.0."""
    membrane = np.asarray(membrane, dtype=np.float64)
    threshold = np.asarray(threshold, dtype=np.float64)
    if membrane.shape[-1] != threshold.shape[-1]:
        raise ShapeError(f"membrane {membrane.shape} vs threshold {threshold.shape}")
    return (membrane >= threshold).astype(np.float64)


def surrogate(x):
    """Smooth spike stand-in ``(1/pi) * arctan(pi * x)``."""
    return np.arctan(np.pi * np.asarray(x, dtype=np.float64)) / np.pi


def surrogate_grad(x):
    """Derivative of :func:`surrogate`: ``1 / (1 + (pi*x)^2)``."""
    px = np.pi * np.asarray(x, dtype=np.float64)
    return 1.0 / (1.0 + px * px)


def smooth_spike(membrane: np.ndarray, threshold: np.ndarray) -> np.ndarray:
    """Differentiable spike used in gradient-check (smooth) mode."""
    return 0.5 + surrogate(membrane - threshold)


@dataclass
class LifParams:
    """Trainable tensors of one LIF/RLIF layer.

    ``weights`` is ``[units, fan_in + 1]`` (bias absorbed), ``rec_weights``
    is ``[units, fan_in]`` or None for a plain LIF.
    """

    weights: np.ndarray
    decay: np.ndarray
    threshold: np.ndarray
    rec_weights: np.ndarray | None = None

    def __post_init__(self):
        if np.any(self.decay <= 0) or np.any(self.decay > 1):
            raise ValueError("decay must lie in (0, 1]")
        if np.any(self.threshold <= 0):
            raise ValueError("threshold must be positive")


@dataclass
class LifState:
    membrane: np.ndarray
    last_spike: np.ndarray

    @classmethod
    def zeros(cls, batch: int, units: int) -> "LifState":
        return cls(np.zeros((batch, units)), np.zeros((batch, units)))


def lif_step(
    state: LifState,
    inp: np.ndarray,
    params: LifParams,
    prev_layer_prev_t: np.ndarray | None = None,
    smooth: bool = False,
) -> LifState:
    """One membrane-potential update.

    ``inp`` is the preceding layer's output at the current step; the weight
    projection happens here.  When ``params.rec_weights`` is present the
    recurrent drive ``V @ prev_layer_prev_t`` is added (RLIF).
    """
    inp = np.atleast_2d(np.asarray(inp, dtype=np.float64))
    if params.weights.shape[1] != inp.shape[-1] + 1:
        raise ShapeError(
            f"weights expect fan-in {params.weights.shape[1] - 1}, input has {inp.shape[-1]}"
        )
    drive = augment(inp) @ params.weights.T
    if params.rec_weights is not None:
        if prev_layer_prev_t is None:
            prev_layer_prev_t = np.zeros_like(inp)
        drive = drive + np.atleast_2d(prev_layer_prev_t) @ params.rec_weights.T
    membrane = (
        params.decay * state.membrane + drive - state.last_spike * params.threshold
    )
    if smooth:
        spikes = smooth_spike(membrane, params.threshold)
    else:
        spikes = spike_activation(membrane, params.threshold)
    return LifState(membrane=membrane, last_spike=spikes)


@dataclass
class SlstmParams:
    """Gate weights of one spiking-LSTM layer.

    Each ``w_*`` is ``[units, fan_in + 1]``; each ``v_*`` is
    ``[units, fan_in]``.  No decay parameter: forgetting is handled by the
    gates.  ``threshold`` is absent (None) for the non-spiking LSTM variant.
    """

    w_f: np.ndarray
    w_i: np.ndarray
    w_o: np.ndarray
    w_c: np.ndarray
    v_f: np.ndarray
    v_i: np.ndarray
    v_o: np.ndarray
    v_c: np.ndarray
    threshold: np.ndarray | None = None

    def __post_init__(self):
        if self.threshold is not None and np.any(self.threshold <= 0):
            raise ValueError("threshold must be positive")


@dataclass
class SlstmState:
    cell: np.ndarray
    hidden: np.ndarray
    last_spike: np.ndarray

    @classmethod
    def zeros(cls, batch: int, units: int) -> "SlstmState":
        z = np.zeros((batch, units))
        return cls(z.copy(), z.copy(), z.copy())


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def slstm_step(
    state: SlstmState,
    prev_layer_t: np.ndarray,
    params: SlstmParams,
    prev_layer_prev_t: np.ndarray | None = None,
    smooth: bool = False,
) -> SlstmState:
    """One spiking-LSTM update.

    Gates see the preceding layer at the current step and, through the
    recurrent weights, at the previous step.  The hidden value doubles as
    the membrane potential; after a spike the threshold is subtracted.
    """
    x_t = np.atleast_2d(np.asarray(prev_layer_t, dtype=np.float64))
    if prev_layer_prev_t is None:
        x_prev = np.zeros_like(x_t)
    else:
        x_prev = np.atleast_2d(np.asarray(prev_layer_prev_t, dtype=np.float64))
    if params.w_f.shape[1] != x_t.shape[-1] + 1:
        raise ShapeError(
            f"gate weights expect fan-in {params.w_f.shape[1] - 1}, input has {x_t.shape[-1]}"
        )
    xa = augment(x_t)
    f = sigmoid(xa @ params.w_f.T + x_prev @ params.v_f.T)
    i = sigmoid(xa @ params.w_i.T + x_prev @ params.v_i.T)
    o = sigmoid(xa @ params.w_o.T + x_prev @ params.v_o.T)
    c_tilde = np.tanh(xa @ params.w_c.T + x_prev @ params.v_c.T)
    cell = f * state.cell + i * c_tilde
    hidden = o * np.tanh(cell)
    if params.threshold is None:
        # non-spiking LSTM: hidden passes through, no reset
        return SlstmState(cell=cell, hidden=hidden, last_spike=hidden)
    hidden = hidden - state.last_spike * params.threshold
    if smooth:
        spikes = smooth_spike(hidden, params.threshold)
    else:
        spikes = spike_activation(hidden, params.threshold)
    return SlstmState(cell=cell, hidden=hidden, last_spike=spikes)
