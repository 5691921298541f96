"""Network topology, parameter initialization and recorded forward passes.

A network is an ordered list of layers processing time-major sequences
``[steps, batch, features]``.  The first layer is the constant-current
input; spiking layers communicate via binary spike trains; the decoder and
population head turn membrane potentials back into real numbers, read at
every time step.

Layer-by-layer evaluation is possible because recurrent weights act on the
*preceding* layer's previous-time output (``recurrence="cross"``), so a
layer's full input sequence is known before its time loop starts.  The
optional ``recurrence="self"`` mode feeds a layer's own previous spikes
back instead.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .codec import population_vote
from .errors import ConfigError, DivergenceError, ShapeError
from .linalg import fanin_bound, uniform_init
from .neurons import (
    augment,
    sigmoid,
    smooth_spike,
    spike_activation,
)

SPIKING_KINDS = ("lif", "rlif", "slstm")
LAYER_KINDS = ("input", "lif", "rlif", "slstm", "lstm", "dense", "decoder", "population")
ACTIVATIONS = ("identity", "tanh", "sigmoid")


@dataclass
class LayerSpec:
    kind: str
    width: int
    activation: str = "identity"  # dense layers only

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ConfigError(f"unknown layer kind {self.kind!r}")
        if self.width < 1:
            raise ConfigError("layer width must be positive")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}")


@dataclass
class NetworkSpec:
    """Ordered layer descriptors plus sequence dimensions."""

    layers: list[LayerSpec]
    steps: int
    d_x: int
    d_y: int
    recurrence: str = "cross"

    def __post_init__(self):
        if self.steps < 1 or self.d_x < 1 or self.d_y < 1:
            raise ConfigError("steps, d_x and d_y must be positive")
        if self.recurrence not in ("cross", "self"):
            raise ConfigError(f"unknown recurrence mode {self.recurrence!r}")
        if not self.layers or self.layers[0].kind != "input":
            raise ConfigError("first layer must be the constant-current input")
        if self.layers[0].width != self.d_x:
            raise ConfigError("input layer width must equal d_x")
        for prev, cur in zip(self.layers, self.layers[1:]):
            if cur.kind == "input":
                raise ConfigError("only the first layer may be the input")
            if cur.kind == "population":
                if prev.kind != "decoder" or prev.width != cur.width:
                    raise ConfigError(
                        "population must follow a decoder of the same width"
                    )
                if cur.width % self.d_y != 0:
                    raise ConfigError("population width must be divisible by d_y")
        last = self.layers[-1]
        if last.kind == "population":
            pass
        elif last.kind == "dense":
            if last.width != self.d_y:
                raise ConfigError("final dense width must equal d_y")
        else:
            raise ConfigError("network must end in a population or dense layer")

    def to_json(self) -> str:
        doc = {
            "layers": [
                {"kind": l.kind, "width": l.width, "activation": l.activation}
                for l in self.layers
            ],
            "steps": self.steps,
            "d_x": self.d_x,
            "d_y": self.d_y,
            "recurrence": self.recurrence,
        }
        return json.dumps(doc, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "NetworkSpec":
        doc = json.loads(text)
        layers = [
            LayerSpec(l["kind"], l["width"], l.get("activation", "identity"))
            for l in doc["layers"]
        ]
        return cls(
            layers=layers,
            steps=doc["steps"],
            d_x=doc["d_x"],
            d_y=doc["d_y"],
            recurrence=doc.get("recurrence", "cross"),
        )


def make_preset(
    name: str,
    n_u: int = 128,
    n_o: int = 16,
    d_t: int = 5,
    d_x: int = 1,
    d_y: int = 1,
    recurrence: str = "cross",
) -> NetworkSpec:
    """Experiment topologies: three hidden layers plus the regression head."""
    n_p = n_o * d_y
    head = [LayerSpec("decoder", n_p), LayerSpec("population", n_p)]
    if name == "elastic-lif":
        hidden = [LayerSpec("lif", n_u)] * 3
    elif name == "ro-rlif":
        hidden = [LayerSpec("rlif", n_u)] * 3
    elif name == "plastic-slstm":
        hidden = [LayerSpec("slstm", n_u)] * 3
    elif name == "plastic-lstm":
        hidden = [LayerSpec("lstm", n_u)] * 3
        head = [LayerSpec("dense", n_u, "tanh"), LayerSpec("dense", d_y, "identity")]
    else:
        raise ConfigError(f"unknown preset {name!r}")
    layers = [LayerSpec("input", d_x)] + hidden + head
    return NetworkSpec(layers=layers, steps=d_t, d_x=d_x, d_y=d_y, recurrence=recurrence)


PRESET_NAMES = ("elastic-lif", "ro-rlif", "plastic-slstm", "plastic-lstm")

_GATES = ("f", "i", "o", "c")


def init_params(spec: NetworkSpec, rng: np.random.Generator) -> dict[str, np.ndarray]:
    """Fresh trainable tensors for every layer.

    Weights are uniform on +-1/sqrt(fan_in); decays uniform on [0.4, 0.9];
    thresholds start at 1.0.
    """
    params: dict[str, np.ndarray] = {}
    fan_in = spec.layers[0].width
    for idx, layer in enumerate(spec.layers[1:], start=1):
        n = layer.width
        b = fanin_bound(fan_in)
        key = f"l{idx}"
        if layer.kind in ("lif", "rlif"):
            params[f"{key}.W"] = uniform_init(n, fan_in + 1, b, rng)
            if layer.kind == "rlif":
                rec_in = n if spec.recurrence == "self" else fan_in
                params[f"{key}.V"] = uniform_init(n, rec_in, fanin_bound(rec_in), rng)
            params[f"{key}.beta"] = rng.uniform(0.4, 0.9, size=n)
            params[f"{key}.thr"] = np.ones(n)
        elif layer.kind in ("slstm", "lstm"):
            for g in _GATES:
                params[f"{key}.W{g}"] = uniform_init(n, fan_in + 1, b, rng)
            for g in _GATES:
                params[f"{key}.V{g}"] = uniform_init(n, fan_in, b, rng)
            if layer.kind == "slstm":
                # the hidden state o * tanh(c) lives in (-1, 1), so a unit
                # threshold would never fire; start well inside that range
                params[f"{key}.thr"] = np.full(n, 0.1)
        elif layer.kind == "dense":
            params[f"{key}.W"] = uniform_init(n, fan_in + 1, b, rng)
        elif layer.kind == "decoder":
            params[f"{key}.W"] = uniform_init(n, fan_in + 1, b, rng)
            params[f"{key}.beta"] = rng.uniform(0.4, 0.9, size=n)
        elif layer.kind == "population":
            params[f"{key}.W"] = uniform_init(n, fan_in + 1, b, rng)
            params[f"{key}.beta"] = rng.uniform(0.4, 0.9, size=n)
        fan_in = n
    return params


def dense_step(inp: np.ndarray, weights: np.ndarray, activation: str = "identity") -> np.ndarray:
    """Feed-forward layer evaluation ``phi(W @ [inp; 1])``."""
    inp = np.atleast_2d(np.asarray(inp, dtype=np.float64))
    if weights.shape[1] != inp.shape[-1] + 1:
        raise ShapeError(
            f"weights expect fan-in {weights.shape[1] - 1}, input has {inp.shape[-1]}"
        )
    z = augment(inp) @ weights.T
    if activation == "identity":
        return z
    if activation == "tanh":
        return np.tanh(z)
    if activation == "sigmoid":
        return sigmoid(z)
    raise ConfigError(f"unknown activation {activation!r}")


@dataclass
class ForwardRecord:
    """Everything a backward pass or profiler needs from one forward pass."""

    spec: NetworkSpec
    output: np.ndarray  # [steps, batch, d_y]
    caches: list[dict] = field(default_factory=list)
    mode: str = "surrogate"
    reset_grad: bool = False


def _shift_back(x: np.ndarray) -> np.ndarray:
    """Previous-time view: ``out[t] = x[t-1]`` with zeros at ``t = 0``."""
    out = np.zeros_like(x)
    out[1:] = x[:-1]
    return out


def _lif_forward(x, params, key, self_rec, smooth):
    T, B, _ = x.shape
    W = params[f"{key}.W"]
    beta = params[f"{key}.beta"]
    thr = params[f"{key}.thr"]
    V = params.get(f"{key}.V")
    n = W.shape[0]
    drive = augment(x).reshape(T * B, -1) @ W.T
    drive = drive.reshape(T, B, n)
    if V is not None and not self_rec:
        drive = drive + (_shift_back(x).reshape(T * B, -1) @ V.T).reshape(T, B, n)
    U = np.empty((T, B, n))
    S = np.empty((T, B, n))
    u = np.zeros((B, n))
    s = np.zeros((B, n))
    for t in range(T):
        d_t = drive[t]
        if V is not None and self_rec:
            d_t = d_t + s @ V.T
        u = beta * u + d_t - s * thr
        s = smooth_spike(u, thr) if smooth else spike_activation(u, thr)
        U[t] = u
        S[t] = s
    cache = {"kind": "rlif" if V is not None else "lif", "x": x, "U": U, "S": S, "key": key}
    return S, cache


def _slstm_forward(x, params, key, spiking, smooth):
    T, B, _ = x.shape
    n = params[f"{key}.Wf"].shape[0]
    xa = augment(x).reshape(T * B, -1)
    xp = _shift_back(x).reshape(T * B, -1)
    Z = {}
    for g in _GATES:
        Z[g] = (xa @ params[f"{key}.W{g}"].T + xp @ params[f"{key}.V{g}"].T).reshape(T, B, n)
    F = sigmoid(Z["f"])
    I = sigmoid(Z["i"])
    O = sigmoid(Z["o"])
    Ct = np.tanh(Z["c"])
    C = np.empty((T, B, n))
    H = np.empty((T, B, n))
    S = np.empty((T, B, n))
    c = np.zeros((B, n))
    s = np.zeros((B, n))
    thr = params.get(f"{key}.thr")
    for t in range(T):
        c = F[t] * c + I[t] * Ct[t]
        h = O[t] * np.tanh(c)
        if spiking:
            h = h - s * thr
            s = smooth_spike(h, thr) if smooth else spike_activation(h, thr)
        else:
            s = h
        C[t] = c
        H[t] = h
        S[t] = s
    cache = {
        "kind": "slstm" if spiking else "lstm",
        "x": x, "F": F, "I": I, "O": O, "Ct": Ct, "C": C, "H": H, "S": S, "key": key,
    }
    return S, cache


def _decoder_forward(x, params, key, kind):
    T, B, _ = x.shape
    W = params[f"{key}.W"]
    beta = params[f"{key}.beta"]
    n = W.shape[0]
    drive = (augment(x).reshape(T * B, -1) @ W.T).reshape(T, B, n)
    U = np.empty((T, B, n))
    u = np.zeros((B, n))
    for t in range(T):
        u = beta * u + drive[t]
        U[t] = u
    cache = {"kind": kind, "x": x, "U": U, "key": key}
    return U, cache


def _dense_forward(x, params, key, activation):
    T, B, _ = x.shape
    W = params[f"{key}.W"]
    out = dense_step(x.reshape(T * B, -1), W, activation).reshape(T, B, W.shape[0])
    cache = {"kind": "dense", "x": x, "out": out, "activation": activation, "key": key}
    return out, cache


def forward(
    spec: NetworkSpec,
    params: dict[str, np.ndarray],
    inputs: np.ndarray,
    record: bool = False,
    mode: str = "surrogate",
) -> ForwardRecord:
    """Run the full sequence through every layer.

    ``inputs`` must be ``[steps, batch, d_x]``.  ``mode="smooth"`` replaces
    hard spikes by their differentiable surrogate everywhere (for gradient
    verification only).
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.ndim != 3 or inputs.shape[0] != spec.steps or inputs.shape[2] != spec.d_x:
        raise ShapeError(
            f"inputs must be [steps={spec.steps}, batch, d_x={spec.d_x}], got {inputs.shape}"
        )
    smooth = mode == "smooth"
    if mode not in ("surrogate", "smooth"):
        raise ConfigError(f"unknown gradient mode {mode!r}")
    h = inputs
    caches: list[dict] = []
    out = None
    for idx, layer in enumerate(spec.layers[1:], start=1):
        key = f"l{idx}"
        if layer.kind in ("lif", "rlif"):
            h, cache = _lif_forward(h, params, key, spec.recurrence == "self", smooth)
        elif layer.kind == "slstm":
            h, cache = _slstm_forward(h, params, key, spiking=True, smooth=smooth)
        elif layer.kind == "lstm":
            h, cache = _slstm_forward(h, params, key, spiking=False, smooth=smooth)
        elif layer.kind == "dense":
            h, cache = _dense_forward(h, params, key, layer.activation)
        elif layer.kind == "decoder":
            h, cache = _decoder_forward(h, params, key, "decoder")
        elif layer.kind == "population":
            h, cache = _decoder_forward(h, params, key, "population")
            out = population_vote(h, spec.d_y)
        caches.append(cache)
    if out is None:
        out = h  # dense head
    if not np.all(np.isfinite(out)):
        raise DivergenceError("non-finite network output")
    return ForwardRecord(
        spec=spec,
        output=out,
        caches=caches if record else [],
        mode=mode,
    )
