"""End-to-end acceptance checks.

Each test prints exactly one PASS/FAIL line (run pytest with ``-s`` to see
them as they complete).  The first five tests finish in seconds to a
minute; the three training studies execute their full protocols and take
from minutes up to a few hours on a single core.
"""

import json

import numpy as np

from spikereg.cli import main
from spikereg.linalg import make_rng
from spikereg.materials import (
    PlasticityParams,
    PlasticState,
    RambergOsgoodParams,
    build_dataset,
    elastic_stress,
    ramberg_osgood_stress,
    return_map_step,
    sample_load_path,
    simulate_path,
)
from spikereg.network import (
    LayerSpec,
    NetworkSpec,
    forward,
    init_params,
    make_preset,
)
from spikereg.profiling import GPU_LIKE, LOIHI_LIKE, DeviceProfile, estimate_energy
from spikereg.training import TrainConfig, finite_difference_check, train

E_MOD = 2.1e5


def _verdict(name: str, ok: bool, detail: str) -> None:
    print(f"\n[acceptance] {name}: {'PASS' if ok else 'FAIL'} ({detail})", flush=True)
    assert ok, f"{name}: {detail}"


def test_material_oracles():
    # closed form for a monotonic ramp past yield:
    # alpha = (E*eps - sy)/(E + K), sigma = sy + K*alpha
    stresses = simulate_path(np.linspace(0.0, 0.01, 80), PlasticityParams())
    state = PlasticState.zeros(1)
    state_sigma, state = return_map_step(PlasticState.zeros(1), np.array([0.01]), PlasticityParams())
    sigma_ref = 5100.0 / 11.0  # 463.636... MPa
    alpha_ref = 3.0 / 385.0  # 0.0077922...
    err_sigma = abs(stresses[-1] - sigma_ref) / sigma_ref
    err_alpha = abs(state.alpha[0] - alpha_ref) / alpha_ref
    ok = err_sigma < 1e-9 and err_alpha < 1e-9

    # Newton solution vs an independent bisection on a 100-point grid
    worst = 0.0
    for eps in np.linspace(1e-4, 0.01, 10):
        for sy in np.linspace(100.0, 500.0, 10):
            params = RambergOsgoodParams(yield_strength=sy)
            s = ramberg_osgood_stress(eps, params)

            def g(x):
                return x / E_MOD + 0.002 * (x / sy) ** 10 - eps

            lo, hi = 0.0, E_MOD * eps + sy
            for _ in range(120):
                mid = 0.5 * (lo + hi)
                if g(mid) < 0.0:
                    lo = mid
                else:
                    hi = mid
            worst = max(worst, abs(s - mid))
    ok = ok and worst < 1e-8
    ok = ok and elastic_stress(0.001) == 210.0
    _verdict(
        "1 material oracles",
        ok,
        f"sigma rel err {err_sigma:.2e}, alpha rel err {err_alpha:.2e}, "
        f"Newton-bisection gap {worst:.2e}, sigma(0.001)={elastic_stress(0.001)}",
    )


def _miniature(kind: str) -> NetworkSpec:
    # two hidden layers of 4 units plus the regression head, 5 steps
    if kind == "lstm":
        tail = [LayerSpec("dense", 4, "tanh"), LayerSpec("dense", 1, "identity")]
    else:
        tail = [LayerSpec("decoder", 2), LayerSpec("population", 2)]
    layers = [LayerSpec("input", 1), LayerSpec(kind, 4), LayerSpec(kind, 4)] + tail
    return NetworkSpec(layers=layers, steps=5, d_x=1, d_y=1)


def test_gradient_correctness():
    rng = make_rng(0)
    worst_overall = 0.0
    ok = True
    for kind in ("lif", "rlif", "slstm", "lstm"):
        spec = _miniature(kind)
        params = init_params(spec, rng)
        x = rng.normal(size=(5, 3, 1))
        y = rng.normal(size=(5, 3, 1))
        worst = max(
            finite_difference_check(spec, params, x, y, mode="smooth", seed=1).values()
        )
        worst_overall = max(worst_overall, worst)
        ok = ok and worst < 1e-4

    head_spec = NetworkSpec(
        layers=[LayerSpec("input", 2), LayerSpec("decoder", 4), LayerSpec("population", 4)],
        steps=5,
        d_x=2,
        d_y=1,
    )
    params = init_params(head_spec, rng)
    x = rng.normal(size=(5, 3, 2))
    y = rng.normal(size=(5, 3, 1))
    head_worst = max(
        finite_difference_check(head_spec, params, x, y, mode="surrogate", seed=2).values()
    )
    ok = ok and head_worst < 1e-6
    _verdict(
        "2 gradient correctness",
        ok,
        f"smooth-mode worst rel err {worst_overall:.2e} (<1e-4), "
        f"decoder/population surrogate worst {head_worst:.2e} (<1e-6)",
    )


def test_energy_accounting():
    # dense-side energy must be bit-identical across inputs with different
    # spike activity
    spec = make_preset("elastic-lif", n_u=16, n_o=2, d_t=10)
    params = init_params(spec, make_rng(3))
    loud = {k: (v * 4.0 if k.endswith(".W") else v) for k, v in params.items()}
    x = make_rng(4).uniform(0, 1, size=(10, 8, 1))
    rep_a = estimate_energy(forward(spec, params, x, record=True), spec, LOIHI_LIKE, GPU_LIKE)
    rep_b = estimate_energy(forward(spec, loud, x, record=True), spec, LOIHI_LIKE, GPU_LIKE)
    spikes_a = sum(l.spike_count for l in rep_a.layers)
    spikes_b = sum(l.spike_count for l in rep_b.layers)
    dense_invariant = rep_a.dense_total == rep_b.dense_total and spikes_a != spikes_b

    # synaptic energy linear in spike count: doubling the recorded spikes
    # feeding a layer exactly doubles its event energy
    syn_only = DeviceProfile("syn", energy_per_synaptic_event=1.0)
    rec = forward(spec, params, x, record=True)
    base = estimate_energy(rec, spec, syn_only, GPU_LIKE)
    s = rec.caches[1]["x"]
    rec.caches[1]["x"] = np.concatenate([s, s], axis=-1)
    doubled = estimate_energy(rec, spec, syn_only, GPU_LIKE)
    linear = np.isclose(
        doubled.layers[1].synaptic_events, 2.0 * base.layers[1].synaptic_events
    )

    # calibration: preset reduction factors within a factor of 3 of the
    # documented x120 / x238 targets (measured away from the calibration
    # seed, on freshly initialized 128-unit networks)
    reductions = {}
    for preset, exp, target in (
        ("elastic-lif", "elastic", 120.0),
        ("plastic-slstm", "plasticity", 238.0),
    ):
        ds = build_dataset(exp, sizes=(16, 16, 96), steps=100, seed=1)
        pspec = make_preset(preset, n_u=128, n_o=16, d_t=100)
        pparams = init_params(pspec, make_rng(1))
        xb = np.transpose(ds[2].x, (1, 0, 2))
        rep = estimate_energy(forward(pspec, pparams, xb, record=True), pspec, LOIHI_LIKE, GPU_LIKE)
        reductions[preset] = (rep.reduction, target)
    calibrated = all(t / 3.0 <= r <= t * 3.0 for r, t in reductions.values())

    ok = dense_invariant and linear and calibrated
    _verdict(
        "6 energy accounting",
        ok,
        f"dense invariant={dense_invariant}, linear={linear}, reductions "
        + ", ".join(f"{k} x{r:.1f} (target x{t:.0f})" for k, (r, t) in reductions.items()),
    )


def test_determinism(tmp_path):
    def gen(name):
        out = tmp_path / name
        assert main([
            "gen", "--experiment", "elastic", "--dt", "4", "--sizes", "16,8,8",
            "--seed", "3", "--out", str(out),
        ]) == 0
        return out

    def train_cmd(data, name):
        out = tmp_path / name
        assert main([
            "train", "--preset", "elastic-lif", "--n-u", "4", "--n-o", "2",
            "--epochs", "3", "--batch-size", "16", "--seed", "2",
            "--data", str(data), "--out", str(out),
        ]) == 0
        return out

    def eval_cmd(run, data, name):
        out = tmp_path / name
        assert main([
            "eval", "--snapshot", str(run / "snapshot.bin"),
            "--spec", str(run / "spec.json"), "--data", str(data),
            "--out", str(out),
        ]) == 0
        return out

    g1, g2 = gen("g1"), gen("g2")
    gen_same = all(
        (g1 / f).read_bytes() == (g2 / f).read_bytes()
        for f in ("train.csv", "val.csv", "test.csv", "meta.json")
    )
    t1, t2 = train_cmd(g1, "t1"), train_cmd(g1, "t2")
    train_same = all(
        (t1 / f).read_bytes() == (t2 / f).read_bytes()
        for f in ("report.json", "metrics.csv", "snapshot.bin", "spec.json")
    )
    e1, e2 = eval_cmd(t1, g1, "e1"), eval_cmd(t1, g1, "e2")
    eval_same = (e1 / "metrics.json").read_bytes() == (e2 / "metrics.json").read_bytes()
    ok = gen_same and train_same and eval_same
    _verdict(
        "7 determinism",
        ok,
        f"gen={gen_same}, train={train_same}, eval={eval_same} (byte-identical reruns)",
    )


def test_plasticity_invariants():
    params = PlasticityParams()
    rng = make_rng(8)
    n_paths, steps = 1000, 60
    paths = np.stack([sample_load_path(rng, steps, (0.0, 0.01)) for _ in range(n_paths)])
    state = PlasticState.zeros(n_paths)
    sigmas = np.empty_like(paths)
    dgammas = np.empty_like(paths)
    worst_f = -np.inf
    worst_slack = 0.0
    for t in range(steps):
        prev_alpha = np.asarray(state.alpha).copy()
        sigmas[:, t], state = return_map_step(state, paths[:, t], params)
        dgammas[:, t] = state.alpha - prev_alpha
        f = np.abs(sigmas[:, t]) - (300.0 + 2.1e4 * state.alpha)
        worst_f = max(worst_f, float(f.max()))
        worst_slack = max(worst_slack, float(np.abs(dgammas[:, t] * f).max()))
    kt_ok = worst_f <= 1e-9 and np.all(dgammas >= 0.0) and worst_slack <= 1e-9

    # elastic unloading increments (post-peak, zero plastic multiplier)
    # must have slope exactly E
    d_eps = np.diff(paths, axis=1)
    d_sig = np.diff(sigmas, axis=1)
    unloading = (d_eps < 0.0) & (dgammas[:, 1:] == 0.0)
    slopes = d_sig[unloading] / d_eps[unloading]
    slope_err = float(np.max(np.abs(slopes - E_MOD)) / E_MOD) if slopes.size else 0.0
    slope_ok = slopes.size > 0 and slope_err < 1e-6
    ok = kt_ok and slope_ok
    _verdict(
        "8 plasticity invariants",
        ok,
        f"max f {worst_f:.2e} (<=1e-9), min dgamma {dgammas.min():.2e}, "
        f"max dgamma*f {worst_slack:.2e}, elastic unload slope rel err {slope_err:.2e} "
        f"over {slopes.size} increments",
    )


def test_elasticity_time_step_study():
    results = {}
    for d_t in (5, 100):
        ds = build_dataset("elastic", sizes=(1024, 1024, 1024), steps=d_t, seed=0)
        errs_all, errs_last = [], []
        for seed in (0, 1, 2):
            spec = make_preset("elastic-lif", n_u=64, n_o=16, d_t=d_t)
            report, _ = train(spec, ds, TrainConfig(epochs=500, batch_size=128, seed=seed))
            errs_all.append(report.test_error_all_steps)
            errs_last.append(report.test_error_last_step)
        results[d_t] = (float(np.mean(errs_all)), float(np.mean(errs_last)))
    bound_ok = results[5][0] <= 0.15
    converge_ok = results[100][1] < results[100][0]
    ok = bound_ok and converge_ok
    _verdict(
        "3 elasticity time-step study",
        ok,
        f"all-steps@dt5 {results[5][0]:.4f} (<=0.15), "
        f"dt100 last {results[100][1]:.4f} < all {results[100][0]:.4f}",
    )


def test_ramberg_osgood_rlif():
    ds = build_dataset("ramberg-osgood", sizes=(1024, 1024, 1024), steps=20, seed=5)
    spec = make_preset("ro-rlif", n_u=64, n_o=16, d_t=20)
    report, _ = train(spec, ds, TrainConfig(epochs=1000, batch_size=1024, seed=5))
    ok = report.test_error_all_steps <= 0.15
    _verdict(
        "4 Ramberg-Osgood RLIF",
        ok,
        f"all-steps mean relative error {report.test_error_all_steps:.4f} (<=0.15)",
    )


def test_plasticity_slstm():
    ds = build_dataset("plasticity", sizes=(10240, 1024, 1024), steps=100, seed=0)
    errors = {}
    for n_u in (64, 16):
        spec = make_preset("plastic-slstm", n_u=n_u, n_o=16, d_t=100)
        report, _ = train(spec, ds, TrainConfig(epochs=100, batch_size=128, seed=0))
        errors[n_u] = report.test_error_last_step
    bound_ok = errors[64] <= 1.5e-2
    width_ok = errors[64] < errors[16]
    ok = bound_ok and width_ok
    _verdict(
        "5 plasticity SLSTM",
        ok,
        f"last-step err n_u=64 {errors[64]:.4e} (<=1.5e-2), "
        f"n_u=16 {errors[16]:.4e} (width trend {'holds' if width_ok else 'violated'})",
    )
