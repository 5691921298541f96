"""Surrogate-gradient BPTT, AdamW and the train/validate/select loop."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError, DivergenceError, ShapeError
from .linalg import make_rng
from .network import ForwardRecord, NetworkSpec, forward
from .neurons import augment, surrogate_grad


def mse_loss(pred: np.ndarray, target: np.ndarray) -> float:
    """Mean squared error over all steps, samples and features."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeError(f"shape mismatch: {pred.shape} vs {target.shape}")
    diff = pred - target
    return float(np.mean(diff * diff))


def mean_relative_error(pred: np.ndarray, ref: np.ndarray, mode: str = "all-steps") -> float:
    """Sample-averaged ``||ref_i - pred_i|| / ||ref_i||``.

    ``pred``/``ref`` are per-sample histories ``[n_s, steps, ...]``.  In
    ``last-step`` mode only the final step of each history enters.
    """
    pred = np.asarray(pred, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if pred.shape != ref.shape:
        raise ShapeError(f"shape mismatch: {pred.shape} vs {ref.shape}")
    if pred.shape[0] < 1:
        raise DataError("need at least one sample")
    if mode == "last-step":
        pred = pred[:, -1]
        ref = ref[:, -1]
    elif mode != "all-steps":
        raise ConfigError(f"unknown error mode {mode!r}")
    n_s = pred.shape[0]
    pred = pred.reshape(n_s, -1)
    ref = ref.reshape(n_s, -1)
    ref_norm = np.linalg.norm(ref, axis=1)
    if np.any(ref_norm == 0.0):
        raise DataError("reference sample with zero norm")
    return float(np.mean(np.linalg.norm(ref - pred, axis=1) / ref_norm))


def _shift_back(x: np.ndarray) -> np.ndarray:
    out = np.zeros_like(x)
    out[1:] = x[:-1]
    return out


def _lif_backward(g_out, cache, params, self_rec, reset_grad):
    x, U, S, key = cache["x"], cache["U"], cache["S"], cache["key"]
    W = params[f"{key}.W"]
    V = params.get(f"{key}.V")
    beta = params[f"{key}.beta"]
    thr = params[f"{key}.thr"]
    T, B, n = U.shape
    d_in = x.shape[-1]
    DU = np.empty((T, B, n))
    dbeta = np.zeros(n)
    dthr = np.zeros(n)
    dU_next = np.zeros((B, n))
    for t in range(T - 1, -1, -1):
        ds = g_out[t].copy()
        if reset_grad:
            ds -= thr * dU_next
        if self_rec and V is not None:
            ds += dU_next @ V
        sp = surrogate_grad(U[t] - thr)
        dU = ds * sp + beta * dU_next
        if t > 0:
            dbeta += np.sum(dU * U[t - 1], axis=0)
        dthr += np.sum(-ds * sp, axis=0)
        if reset_grad and t > 0:
            dthr += np.sum(-S[t - 1] * dU, axis=0)
        DU[t] = dU
        dU_next = dU
    DU_flat = DU.reshape(T * B, n)
    grads = {
        f"{key}.W": DU_flat.T @ augment(x).reshape(T * B, d_in + 1),
        f"{key}.beta": dbeta,
        f"{key}.thr": dthr,
    }
    g_in = (DU_flat @ W[:, :d_in]).reshape(T, B, d_in)
    if V is not None:
        if self_rec:
            grads[f"{key}.V"] = DU_flat.T @ _shift_back(S).reshape(T * B, n)
        else:
            grads[f"{key}.V"] = DU_flat.T @ _shift_back(x).reshape(T * B, d_in)
            g_in[:-1] += (DU[1:].reshape(-1, n) @ V).reshape(T - 1, B, d_in)
    return g_in, grads


_GATES = ("f", "i", "o", "c")


def _slstm_backward(g_out, cache, params, reset_grad):
    x, F, I, O, Ct, C, H, S = (
        cache["x"], cache["F"], cache["I"], cache["O"],
        cache["Ct"], cache["C"], cache["H"], cache["S"],
    )
    key = cache["key"]
    spiking = cache["kind"] == "slstm"
    thr = params.get(f"{key}.thr")
    T, B, n = H.shape
    d_in = x.shape[-1]
    dZ = {g: np.empty((T, B, n)) for g in _GATES}
    dthr = np.zeros(n)
    dc_next = np.zeros((B, n))
    f_next = np.zeros((B, n))
    dh_next = np.zeros((B, n))
    for t in range(T - 1, -1, -1):
        if spiking:
            ds = g_out[t].copy()
            if reset_grad:
                ds -= thr * dh_next
            sp = surrogate_grad(H[t] - thr)
            dh = ds * sp
            dthr += np.sum(-ds * sp, axis=0)
            if reset_grad and t > 0:
                dthr += np.sum(-S[t - 1] * dh, axis=0)
        else:
            dh = g_out[t]
        tc = np.tanh(C[t])
        do = dh * tc
        dc = dh * O[t] * (1.0 - tc * tc) + dc_next * f_next
        c_prev = C[t - 1] if t > 0 else np.zeros((B, n))
        df = dc * c_prev
        di = dc * Ct[t]
        dct = dc * I[t]
        dZ["o"][t] = do * O[t] * (1.0 - O[t])
        dZ["f"][t] = df * F[t] * (1.0 - F[t])
        dZ["i"][t] = di * I[t] * (1.0 - I[t])
        dZ["c"][t] = dct * (1.0 - Ct[t] * Ct[t])
        dc_next = dc
        f_next = F[t]
        dh_next = dh
    xa = augment(x).reshape(T * B, d_in + 1)
    xp = _shift_back(x).reshape(T * B, d_in)
    grads = {}
    g_in = np.zeros((T, B, d_in))
    for g in _GATES:
        z_flat = dZ[g].reshape(T * B, n)
        grads[f"{key}.W{g}"] = z_flat.T @ xa
        grads[f"{key}.V{g}"] = z_flat.T @ xp
        Wg = params[f"{key}.W{g}"]
        Vg = params[f"{key}.V{g}"]
        g_in += (z_flat @ Wg[:, :d_in]).reshape(T, B, d_in)
        g_in[:-1] += (dZ[g][1:].reshape(-1, n) @ Vg).reshape(T - 1, B, d_in)
    if spiking:
        grads[f"{key}.thr"] = dthr
    return g_in, grads


def _decoder_backward(g_out, cache, params):
    x, U, key = cache["x"], cache["U"], cache["key"]
    W = params[f"{key}.W"]
    beta = params[f"{key}.beta"]
    T, B, n = U.shape
    d_in = x.shape[-1]
    DU = np.empty((T, B, n))
    dbeta = np.zeros(n)
    dU_next = np.zeros((B, n))
    for t in range(T - 1, -1, -1):
        dU = g_out[t] + beta * dU_next
        if t > 0:
            dbeta += np.sum(dU * U[t - 1], axis=0)
        DU[t] = dU
        dU_next = dU
    DU_flat = DU.reshape(T * B, n)
    grads = {
        f"{key}.W": DU_flat.T @ augment(x).reshape(T * B, d_in + 1),
        f"{key}.beta": dbeta,
    }
    g_in = (DU_flat @ W[:, :d_in]).reshape(T, B, d_in)
    return g_in, grads


def _dense_backward(g_out, cache, params):
    x, out, key = cache["x"], cache["out"], cache["key"]
    W = params[f"{key}.W"]
    T, B, n = out.shape
    d_in = x.shape[-1]
    act = cache["activation"]
    if act == "identity":
        dz = g_out
    elif act == "tanh":
        dz = g_out * (1.0 - out * out)
    else:  # sigmoid
        dz = g_out * out * (1.0 - out)
    dz_flat = dz.reshape(T * B, n)
    grads = {f"{key}.W": dz_flat.T @ augment(x).reshape(T * B, d_in + 1)}
    g_in = (dz_flat @ W[:, :d_in]).reshape(T, B, d_in)
    return g_in, grads


def bptt_backward(
    record: ForwardRecord,
    g_output: np.ndarray,
    params: dict[str, np.ndarray],
    reset_grad: bool | None = None,
) -> dict[str, np.ndarray]:
    """Reverse-time gradient accumulation through the unrolled network.

    ``g_output`` is the loss gradient at the network output
    ``[steps, batch, d_y]``.  By default the reset term is detached from
    the graph in surrogate mode and kept in smooth mode (finite-difference
    checks require the full graph).
    """
    if not record.caches:
        raise ConfigError("forward pass must be run with record=True")
    if reset_grad is None:
        reset_grad = record.mode == "smooth"
    spec = record.spec
    self_rec = spec.recurrence == "self"
    g = np.asarray(g_output, dtype=np.float64)
    grads: dict[str, np.ndarray] = {}
    for cache in reversed(record.caches):
        kind = cache["kind"]
        if kind == "population":
            # mean over each population of size n/d_y
            n = cache["U"].shape[-1]
            group = n // spec.d_y
            g = np.repeat(g / group, group, axis=-1)
            g, layer_grads = _decoder_backward(g, cache, params)
        elif kind == "decoder":
            g, layer_grads = _decoder_backward(g, cache, params)
        elif kind in ("lif", "rlif"):
            g, layer_grads = _lif_backward(g, cache, params, self_rec, reset_grad)
        elif kind in ("slstm", "lstm"):
            g, layer_grads = _slstm_backward(g, cache, params, reset_grad)
        elif kind == "dense":
            g, layer_grads = _dense_backward(g, cache, params)
        else:
            raise ConfigError(f"cannot backprop through layer kind {kind!r}")
        grads.update(layer_grads)
    return grads


@dataclass
class AdamWState:
    """First/second-moment accumulators, one pair per parameter tensor."""

    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0

    @classmethod
    def init(cls, params: dict[str, np.ndarray]) -> "AdamWState":
        return cls(
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
            step=0,
        )


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 1024
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    weight_decay: float = 0.01
    eps: float = 1e-8
    seed: int = 0
    preset: str = "elastic-lif"
    loss: str = "mse"
    grad_mode: str = "surrogate"
    clip_norm: float | None = 1.0

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigError("epochs must be >= 0 and batch_size positive")
        if self.lr <= 0:
            raise ConfigError("learning rate must be positive")
        if self.grad_mode not in ("surrogate", "smooth"):
            raise ConfigError(f"unknown gradient mode {self.grad_mode!r}")


def adamw_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamWState,
    config: TrainConfig,
) -> None:
    """In-place decoupled-weight-decay Adam update."""
    state.step += 1
    t = state.step
    b1, b2 = config.beta1, config.beta2
    for k, p in params.items():
        g = grads[k]
        if not np.all(np.isfinite(g)):
            raise DivergenceError(f"non-finite gradient for {k}")
        if g.shape != p.shape:
            raise ShapeError(f"gradient shape mismatch for {k}")
        state.m[k] = b1 * state.m[k] + (1.0 - b1) * g
        state.v[k] = b2 * state.v[k] + (1.0 - b2) * g * g
        m_hat = state.m[k] / (1.0 - b1**t)
        v_hat = state.v[k] / (1.0 - b2**t)
        p -= config.lr * (m_hat / (np.sqrt(v_hat) + config.eps) + config.weight_decay * p)


def clip_gradients(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Global-norm clipping; returns the pre-clip norm."""
    total = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if total > max_norm > 0:
        scale = max_norm / total
        for k in grads:
            grads[k] = grads[k] * scale
    return total


@dataclass
class TrainReport:
    train_losses: list[float]
    val_losses: list[float]
    best_epoch: int
    best_val_loss: float
    test_error_all_steps: float
    test_error_last_step: float
    test_loss: float

    def to_json(self) -> str:
        return json.dumps(self.__dict__, indent=2)

    def metrics_csv(self) -> str:
        lines = ["epoch,train_loss,val_loss"]
        for i, (tr, va) in enumerate(zip(self.train_losses, self.val_losses), start=1):
            lines.append(f"{i},{tr:.17g},{va:.17g}")
        return "\n".join(lines) + "\n"


def predict(spec: NetworkSpec, params, x: np.ndarray, mode: str = "surrogate") -> np.ndarray:
    """Forward a sample-major batch ``[n, steps, d_x]`` -> ``[n, steps, d_y]``."""
    rec = forward(spec, params, np.transpose(x, (1, 0, 2)), record=False, mode=mode)
    return np.transpose(rec.output, (1, 0, 2))


def evaluate_errors(spec, params, dataset, mode: str = "surrogate"):
    """Test metrics (loss, all-steps MRE, last-step MRE).

    Relative errors are computed in the network's standardized output
    space; reference norms there are bounded away from zero for all but
    pathological samples.
    """
    pred = predict(spec, params, dataset.x, mode=mode)
    loss = mse_loss(pred, dataset.y)
    err_all = mean_relative_error(pred, dataset.y, "all-steps")
    err_last = mean_relative_error(pred, dataset.y, "last-step")
    return loss, err_all, err_last


def train(spec: NetworkSpec, datasets, config: TrainConfig, params=None):
    """Full training loop with best-validation snapshot selection.

    ``datasets`` is a ``(train, val, test)`` triple of standardized
    :class:`~spikereg.materials.Dataset` objects.  Returns
    ``(TrainReport, best_params)``.
    """
    train_set, val_set, test_set = datasets
    rng = make_rng(config.seed)
    if params is None:
        from .network import init_params

        params = init_params(spec, rng)
    n_train = train_set.x.shape[0]
    train_losses: list[float] = []
    val_losses: list[float] = []
    best_params = copy.deepcopy(params)
    best_val = float("inf")
    best_epoch = 0
    state = AdamWState.init(params)

    def val_loss_of(p):
        return mse_loss(predict(spec, p, val_set.x, config.grad_mode), val_set.y)

    if config.epochs == 0:
        best_val = val_loss_of(params)
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n_train)
        epoch_loss = 0.0
        try:
            for start in range(0, n_train, config.batch_size):
                idx = order[start : start + config.batch_size]
                xb = np.transpose(train_set.x[idx], (1, 0, 2))
                yb = np.transpose(train_set.y[idx], (1, 0, 2))
                rec = forward(spec, params, xb, record=True, mode=config.grad_mode)
                loss = mse_loss(rec.output, yb)
                if not np.isfinite(loss):
                    raise DivergenceError("non-finite training loss", snapshot=best_params)
                epoch_loss += loss * len(idx)
                g_out = 2.0 * (rec.output - yb) / rec.output.size
                grads = bptt_backward(rec, g_out, params)
                if config.clip_norm is not None:
                    clip_gradients(grads, config.clip_norm)
                adamw_step(params, grads, state, config)
        except DivergenceError as exc:
            if exc.snapshot is None:
                exc.snapshot = best_params
            raise
        train_losses.append(epoch_loss / n_train)
        vl = val_loss_of(params)
        val_losses.append(vl)
        if vl < best_val:
            best_val = vl
            best_epoch = epoch
            best_params = copy.deepcopy(params)
    test_loss, err_all, err_last = evaluate_errors(
        spec, best_params, test_set, config.grad_mode
    )
    report = TrainReport(
        train_losses=train_losses,
        val_losses=val_losses,
        best_epoch=best_epoch,
        best_val_loss=best_val,
        test_error_all_steps=err_all,
        test_error_last_step=err_last,
        test_loss=test_loss,
    )
    return report, best_params


def finite_difference_check(
    spec: NetworkSpec,
    params: dict[str, np.ndarray],
    x: np.ndarray,
    y: np.ndarray,
    mode: str = "smooth",
    n_coords: int = 20,
    seed: int = 0,
    h: float = 1e-5,
) -> dict[str, float]:
    """Max relative error of BPTT gradients vs central differences.

    ``x``/``y`` are time-major ``[steps, batch, d]``.  Samples up to
    ``n_coords`` coordinates per parameter tensor.
    """
    rng = make_rng(seed)
    rec = forward(spec, params, x, record=True, mode=mode)
    g_out = 2.0 * (rec.output - y) / rec.output.size
    grads = bptt_backward(rec, g_out, params, reset_grad=(mode == "smooth"))

    def loss_fn():
        out = forward(spec, params, x, record=False, mode=mode).output
        return mse_loss(out, y)

    result = {}
    for k, p in params.items():
        flat = p.reshape(-1)
        count = min(n_coords, flat.size)
        coords = rng.choice(flat.size, size=count, replace=False)
        worst = 0.0
        for c in coords:
            orig = flat[c]
            step = h * max(1.0, abs(orig))
            flat[c] = orig + step
            lp = loss_fn()
            flat[c] = orig - step
            lm = loss_fn()
            flat[c] = orig
            fd = (lp - lm) / (2.0 * step)
            an = grads[k].reshape(-1)[c]
            denom = max(abs(fd), abs(an), 1e-6)
            worst = max(worst, abs(fd - an) / denom)
        result[k] = worst
    return result
