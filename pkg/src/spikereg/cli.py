"""Command-line front end: gen, train, eval, profile.

Every command is a deterministic function of its flags, config file and
input files; reruns with the same seed produce byte-identical outputs.
Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numeric
divergence.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import materials
from .errors import ConfigError, DataError, DivergenceError, SolverError
from .linalg import destandardize, make_rng
from .network import NetworkSpec, forward, init_params, make_preset
from .profiling import GPU_LIKE, LOIHI_LIKE, DeviceProfile, estimate_energy, sparsity_stats
from .snapshot import load_params, save_params
from .training import (
    TrainConfig,
    evaluate_errors,
    finite_difference_check,
    mean_relative_error,
    predict,
    train,
)

PRESET_EXPERIMENT = {
    "elastic-lif": "elastic",
    "ro-rlif": "ramberg-osgood",
    "plastic-slstm": "plasticity",
    "plastic-lstm": "plasticity",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _resolve_seed(args, cfg) -> int:
    if getattr(args, "seed", None) is not None:
        return args.seed
    if "seed" in cfg:
        return int(cfg["seed"])
    env = os.environ.get("SPIKEREG_SEED")
    if env is not None:
        return int(env)
    return 0


def _load_config(args) -> dict:
    cfg = {}
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.exists():
            raise DataError(f"config file not found: {path}")
        cfg = json.loads(path.read_text())
        if not isinstance(cfg, dict):
            raise ConfigError("config file must hold a JSON object")
    return cfg


def _merged(args, cfg, key, default):
    val = getattr(args, key.replace("-", "_"), None)
    if val is not None:
        return val
    return cfg.get(key, default)


def _echo_config(out_dir: Path, effective: dict) -> None:
    (out_dir / "config.json").write_text(
        json.dumps(effective, indent=2, sort_keys=True) + "\n"
    )


def cmd_gen(args) -> int:
    cfg = _load_config(args)
    seed = _resolve_seed(args, cfg)
    experiment = _merged(args, cfg, "experiment", None)
    if experiment not in materials.EXPERIMENTS:
        raise ConfigError(f"experiment must be one of {materials.EXPERIMENTS}")
    steps = int(_merged(args, cfg, "dt", materials.DEFAULT_STEPS[experiment]))
    sizes = _merged(args, cfg, "sizes", list(materials.DEFAULT_SIZES[experiment]))
    if isinstance(sizes, str):
        sizes = [int(v) for v in sizes.split(",")]
    if len(sizes) != 3 or min(sizes) < 1:
        raise ConfigError("sizes must be three positive integers")
    out_dir = Path(_merged(args, cfg, "out", "data"))
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = make_rng(seed)
    raw = [materials.generate_raw(experiment, n, steps, rng) for n in sizes]
    x_tr, y_tr = raw[0]
    stats = (float(x_tr.mean()), float(x_tr.std()), float(y_tr.mean()), float(y_tr.std()))
    for (x, y), name in zip(raw, ("train", "val", "test")):
        materials.write_dataset_csv(out_dir / f"{name}.csv", x, y)
    materials.write_sidecar(out_dir / "meta.json", experiment, steps, seed, stats)
    _echo_config(
        out_dir,
        {"command": "gen", "experiment": experiment, "dt": steps, "sizes": list(sizes), "seed": seed},
    )
    print(f"wrote {sizes} samples to {out_dir}")
    return 0


def cmd_train(args) -> int:
    cfg = _load_config(args)
    seed = _resolve_seed(args, cfg)
    preset = _merged(args, cfg, "preset", "elastic-lif")
    if preset not in PRESET_EXPERIMENT:
        raise ConfigError(f"preset must be one of {tuple(PRESET_EXPERIMENT)}")
    n_u = int(_merged(args, cfg, "n-u", 128))
    n_o = int(_merged(args, cfg, "n-o", 16))
    epochs = int(_merged(args, cfg, "epochs", 100))
    batch = int(_merged(args, cfg, "batch-size", 1024))
    grad_mode = _merged(args, cfg, "grad-mode", "surrogate")
    data_dir = Path(_merged(args, cfg, "data", "data"))
    out_dir = Path(_merged(args, cfg, "out", "run"))
    out_dir.mkdir(parents=True, exist_ok=True)

    datasets, meta = materials.load_splits(data_dir)
    steps = int(meta["d_t"])
    spec = make_preset(preset, n_u=n_u, n_o=n_o, d_t=steps)
    config = TrainConfig(
        epochs=epochs, batch_size=batch, seed=seed, preset=preset, grad_mode=grad_mode
    )

    if args.grad_check:
        mini_spec = make_preset(preset, n_u=4, n_o=2, d_t=5)
        rng = make_rng(seed)
        params = init_params(mini_spec, rng)
        x = rng.normal(size=(5, 3, 1))
        y = rng.normal(size=(5, 3, 1))
        worst = finite_difference_check(mini_spec, params, x, y, mode="smooth", seed=seed)
        max_err = max(worst.values())
        (out_dir / "grad_check.json").write_text(json.dumps(worst, indent=2) + "\n")
        print(f"grad-check max relative error: {max_err:.3e}")
        if max_err >= 1e-4:
            raise DivergenceError(f"gradient check failed: {max_err:.3e}")

    report, best_params = train(spec, datasets, config)
    (out_dir / "report.json").write_text(report.to_json() + "\n")
    (out_dir / "metrics.csv").write_text(report.metrics_csv())
    save_params(out_dir / "snapshot.bin", best_params)
    (out_dir / "spec.json").write_text(spec.to_json() + "\n")
    _echo_config(
        out_dir,
        {
            "command": "train", "preset": preset, "n_u": n_u, "n_o": n_o,
            "epochs": epochs, "batch_size": batch, "grad_mode": grad_mode,
            "seed": seed, "data": str(data_dir),
        },
    )
    print(
        f"best epoch {report.best_epoch}: "
        f"test MRE all-steps {report.test_error_all_steps:.4e}, "
        f"last-step {report.test_error_last_step:.4e}"
    )
    return 0


def _load_run(args):
    spec = NetworkSpec.from_json(Path(args.spec).read_text()) if Path(args.spec).exists() else None
    if spec is None:
        raise DataError(f"spec file not found: {args.spec}")
    params = load_params(Path(args.snapshot))
    datasets, meta = materials.load_splits(Path(args.data))
    split = {"train": 0, "val": 1, "test": 2}.get(args.split)
    if split is None:
        raise ConfigError("split must be train, val or test")
    return spec, params, datasets[split], meta


def cmd_eval(args) -> int:
    spec, params, dataset, meta = _load_run(args)
    loss, err_all, err_last = evaluate_errors(spec, params, dataset)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    metrics = {
        "loss": loss,
        "mean_relative_error_all_steps": err_all,
        "mean_relative_error_last_step": err_last,
        "split": args.split,
    }
    (out_dir / "metrics.json").write_text(json.dumps(metrics, indent=2) + "\n")
    print(
        f"MRE all-steps {err_all:.6e}  last-step {err_last:.6e}  (split={args.split})"
    )
    if args.predictions:
        pred = predict(spec, params, dataset.x)
        pred_phys = destandardize(pred, dataset.y_mean, dataset.y_std)
        ref_phys = destandardize(dataset.y, dataset.y_mean, dataset.y_std)
        in_phys = destandardize(dataset.x, dataset.x_mean, dataset.x_std)
        lines = ["sample,t,strain,stress_ref,stress_pred"]
        n, steps = pred.shape[:2]
        for i in range(n):
            for t in range(steps):
                lines.append(
                    f"{i},{t},{in_phys[i, t, 0]:.17g},"
                    f"{ref_phys[i, t, 0]:.17g},{pred_phys[i, t, 0]:.17g}"
                )
        (out_dir / "predictions.csv").write_text("\n".join(lines) + "\n")
    return 0


def _device_profiles(args):
    if args.profiles:
        doc = json.loads(Path(args.profiles).read_text())
        spiking = DeviceProfile(**doc["spiking"])
        dense = DeviceProfile(**doc["dense"])
        return spiking, dense
    return LOIHI_LIKE, GPU_LIKE


def cmd_profile(args) -> int:
    spec, params, dataset, meta = _load_run(args)
    spiking_dev, dense_dev = _device_profiles(args)
    x = np.transpose(dataset.x, (1, 0, 2))
    rec = forward(spec, params, x, record=True)
    report = estimate_energy(rec, spec, spiking_dev, dense_dev)
    rates = sparsity_stats(rec)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "energy.json").write_text(report.to_json() + "\n")
    (out_dir / "energy.txt").write_text(report.to_text_table())
    (out_dir / "sparsity.json").write_text(json.dumps(rates, indent=2) + "\n")
    print(report.to_text_table())
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="spikereg", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate material datasets")
    p.add_argument("--experiment", choices=materials.EXPERIMENTS)
    p.add_argument("--dt", type=int)
    p.add_argument("--sizes", type=str, help="train,val,test counts")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", type=str)
    p.add_argument("--config", type=str)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train a preset on generated data")
    p.add_argument("--preset", choices=tuple(PRESET_EXPERIMENT))
    p.add_argument("--n-u", type=int, dest="n_u")
    p.add_argument("--n-o", type=int, dest="n_o")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--grad-mode", choices=("surrogate", "smooth"), dest="grad_mode")
    p.add_argument("--grad-check", action="store_true")
    p.add_argument("--seed", type=int)
    p.add_argument("--data", type=str)
    p.add_argument("--out", type=str)
    p.add_argument("--config", type=str)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a snapshot on a dataset split")
    p.add_argument("--snapshot", required=True)
    p.add_argument("--spec", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--out", default="eval")
    p.add_argument("--predictions", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("profile", help="estimate energy and sparsity")
    p.add_argument("--snapshot", required=True)
    p.add_argument("--spec", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--out", default="profile")
    p.add_argument("--profiles", type=str, help="JSON with spiking/dense device profiles")
    p.set_defaults(func=cmd_profile)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except (DivergenceError, SolverError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
