"""Real-to-spike-domain encoding and spike-to-real decoding.

Encoding is constant current injection: real values are fed to the first
layer unchanged at every step.  Decoding uses leaky integrators without
spikes or resets, followed by an averaging (population voting) head.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyPopulationError, ShapeError
from .neurons import augment


def constant_current_encode(x: np.ndarray, steps: int | None = None) -> np.ndarray:
    """Inject real inputs as a constant current.

    Time-resolved inputs ``[steps, ...]`` pass through unchanged.  When
    ``steps`` is given and ``x`` has no time axis of that length, ``x`` is
    broadcast to every step (e.g. a per-sample scalar such as a yield
    strength).
    """
    x = np.asarray(x, dtype=np.float64)
    if steps is not None:
        if steps < 1:
            raise ShapeError("need at least one time step")
        if x.ndim == 0:
            return np.full(steps, float(x))
        if x.shape[0] != steps:
            return np.broadcast_to(x, (steps,) + x.shape).copy()
    if x.shape[0] == 0:
        raise ShapeError("empty time axis")
    return x


@dataclass
class DecoderState:
    """Leaky-integrator membrane; never spikes, never resets."""

    membrane: np.ndarray

    @classmethod
    def zeros(cls, batch: int, units: int) -> "DecoderState":
        return cls(np.zeros((batch, units)))


def decode_step(
    state: DecoderState,
    prev_layer_t: np.ndarray,
    weights: np.ndarray,
    decay: np.ndarray,
) -> DecoderState:
    """``U_t = decay * U_{t-1} + W @ h_t`` (bias absorbed in ``weights``)."""
    inp = np.atleast_2d(np.asarray(prev_layer_t, dtype=np.float64))
    if weights.shape[1] != inp.shape[-1] + 1:
        raise ShapeError(
            f"weights expect fan-in {weights.shape[1] - 1}, input has {inp.shape[-1]}"
        )
    membrane = decay * state.membrane + augment(inp) @ weights.T
    return DecoderState(membrane=membrane)


def population_vote(decoder_membrane: np.ndarray, n_outputs: int = 1) -> np.ndarray:
    """Average groups of integrator outputs to real numbers.

    The last axis holds ``n_outputs`` contiguous populations of equal size;
    each population is averaged to one output feature.
    """
    m = np.asarray(decoder_membrane, dtype=np.float64)
    n = m.shape[-1]
    if n == 0 or n_outputs < 1 or n % n_outputs != 0:
        raise EmptyPopulationError(
            f"cannot split {n} neurons into {n_outputs} populations"
        )
    return m.reshape(m.shape[:-1] + (n_outputs, n // n_outputs)).mean(axis=-1)
