"""Ground-truth material models and dataset assembly.

Three one-dimensional models drive the experiments: linear elasticity,
the Ramberg-Osgood power law (inverted with Newton's method) and
rate-independent plasticity with linear isotropic hardening (explicit
return mapping).  Stresses are in MPa, strains dimensionless.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, ShapeError, SolverError
from .linalg import make_rng, standardize


@dataclass
class ElasticParams:
    youngs_modulus: float = 2.1e5

    def __post_init__(self):
        if self.youngs_modulus <= 0:
            raise ValueError("E must be positive")


@dataclass
class RambergOsgoodParams:
    youngs_modulus: float = 2.1e5
    yield_strength: float = 300.0
    hardening_exponent: float = 10.0
    plastic_offset: float = 0.002

    def __post_init__(self):
        if self.youngs_modulus <= 0 or self.yield_strength <= 0:
            raise ValueError("E and yield strength must be positive")
        if self.hardening_exponent < 1:
            raise ValueError("hardening exponent must be >= 1")


@dataclass
class PlasticityParams:
    youngs_modulus: float = 2.1e5
    yield_strength: float = 300.0
    hardening_modulus: float = 2.1e4

    def __post_init__(self):
        if min(self.youngs_modulus, self.yield_strength, self.hardening_modulus) <= 0:
            raise ValueError("E, yield strength and K must be positive")


@dataclass
class PlasticState:
    """Plastic strain and accumulated hardening variable (arrays allowed)."""

    eps_pl: np.ndarray | float = 0.0
    alpha: np.ndarray | float = 0.0

    @classmethod
    def zeros(cls, n: int) -> "PlasticState":
        return cls(np.zeros(n), np.zeros(n))


def elastic_stress(strain, params: ElasticParams | None = None):
    """Linear elasticity ``sigma = E * eps``."""
    params = params or ElasticParams()
    return params.youngs_modulus * np.asarray(strain, dtype=np.float64)


def ramberg_osgood_stress(strain: float, params: RambergOsgoodParams) -> float:
    """Stress solving ``eps = sigma/E + offset * (sigma/sigma_Y)^n``.

    Newton iteration with a bisection fallback; the residual is strictly
    increasing in sigma, so the positive root is unique.
    """
    eps = float(strain)
    if eps < 0:
        raise ValueError("strain must be non-negative")
    if eps == 0.0:
        return 0.0
    E = params.youngs_modulus
    sy = params.yield_strength
    n = params.hardening_exponent
    a = params.plastic_offset

    def g(s):
        return s / E + a * (s / sy) ** n - eps

    def g_prime(s):
        return 1.0 / E + a * n * s ** (n - 1.0) / sy**n

    tol = 1e-12 * max(eps, 1e-6)
    sigma = min(E * eps, sy)
    for _ in range(100):
        r = g(sigma)
        if abs(r) < tol:
            return sigma
        sigma_new = sigma - r / g_prime(sigma)
        if sigma_new < 0.0:
            sigma_new = 0.5 * sigma
        sigma = sigma_new
    # Newton stalled; fall back to bisection on a bracketing interval
    lo, hi = 0.0, E * eps + sy
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if g(mid) < 0.0:
            lo = mid
        else:
            hi = mid
        if abs(g(mid)) < tol:
            return mid
    raise SolverError(f"Ramberg-Osgood inversion failed at eps={eps}")


def return_map_step(state: PlasticState, strain, params: PlasticityParams):
    """Explicit elastic-predictor / plastic-corrector step.

    Works elementwise on arrays, so a batch of paths can advance at once.
    Returns ``(stress, new_state)``.
    """
    eps = np.asarray(strain, dtype=np.float64)
    eps_pl = np.asarray(state.eps_pl, dtype=np.float64)
    alpha = np.asarray(state.alpha, dtype=np.float64)
    E, sy, K = params.youngs_modulus, params.yield_strength, params.hardening_modulus
    sigma_trial = E * (eps - eps_pl)
    f_trial = np.abs(sigma_trial) - (sy + K * alpha)
    dgamma = np.where(f_trial > 0.0, f_trial / (E + K), 0.0)
    eps_pl = eps_pl + dgamma * np.sign(sigma_trial)
    alpha = alpha + dgamma
    sigma = E * (eps - eps_pl)
    return sigma, PlasticState(eps_pl=eps_pl, alpha=alpha)


def simulate_path(strains: np.ndarray, params: PlasticityParams) -> np.ndarray:
    """Run the return mapping along one or many strain paths.

    ``strains`` is ``[steps]`` or ``[n, steps]``; output matches.
    """
    strains = np.asarray(strains, dtype=np.float64)
    single = strains.ndim == 1
    paths = strains[None, :] if single else strains
    state = PlasticState.zeros(paths.shape[0])
    stresses = np.empty_like(paths)
    for t in range(paths.shape[1]):
        stresses[:, t], state = return_map_step(state, paths[:, t], params)
    return stresses[0] if single else stresses


def sample_load_path(
    rng: np.random.Generator,
    steps: int,
    eps_max_range: tuple[float, float] = (0.0, 0.01),
    unload_range: tuple[float, float] = (0.2, 0.8),
) -> np.ndarray:
    """Ramp-then-unload strain history starting at zero.

    Loads linearly to a random maximum over the first ``ceil(0.6*steps)``
    steps, then unloads linearly to a random fraction of the maximum.
    """
    if steps < 2:
        raise ShapeError("need at least two time steps")
    eps_max = rng.uniform(*eps_max_range)
    r = rng.uniform(*unload_range)
    m = int(np.ceil(0.6 * steps))
    ramp = np.linspace(0.0, eps_max, m)
    if m >= steps:
        return ramp[:steps]
    unload = np.linspace(eps_max, r * eps_max, steps - m + 1)[1:]
    return np.concatenate([ramp, unload])


@dataclass
class Dataset:
    """Standardized sequences plus the train-set statistics applied."""

    x: np.ndarray  # [n, steps, d_x]
    y: np.ndarray  # [n, steps, d_y]
    x_mean: float
    x_std: float
    y_mean: float
    y_std: float


EXPERIMENTS = ("elastic", "ramberg-osgood", "plasticity")

DEFAULT_SIZES = {
    "elastic": (1024, 1024, 1024),
    "ramberg-osgood": (1024, 1024, 1024),
    "plasticity": (10240, 1024, 1024),
}

DEFAULT_STEPS = {"elastic": 5, "ramberg-osgood": 20, "plasticity": 100}


def material_constants(experiment: str) -> dict:
    if experiment == "elastic":
        return {"E": 2.1e5}
    if experiment == "ramberg-osgood":
        return {"E": 2.1e5, "n": 10.0, "sigma_y_range": [100.0, 500.0], "eps_max": 0.01}
    if experiment == "plasticity":
        return {"E": 2.1e5, "sigma_y": 300.0, "K": 2.1e4, "eps_max_range": [0.0, 0.01]}
    raise DataError(f"unknown experiment {experiment!r}")


def generate_raw(
    experiment: str,
    n_samples: int,
    steps: int,
    rng: np.random.Generator,
    eps_max_range: tuple[float, float] = (0.0, 0.001),
):
    """Raw (unstandardized) input/target sequences, both ``[n, steps]``."""
    if n_samples < 1:
        raise DataError("need at least one sample")
    if experiment == "elastic":
        # one strain level per sample, injected as a constant current; the
        # target stress is likewise constant over the sequence
        params = ElasticParams()
        eps = rng.uniform(*eps_max_range, size=n_samples)
        x = np.broadcast_to(eps[:, None], (n_samples, steps)).copy()
        y = elastic_stress(x, params)
    elif experiment == "ramberg-osgood":
        params = RambergOsgoodParams()
        sigma_y = rng.uniform(100.0, 500.0, size=n_samples)
        ramp = np.linspace(0.0, 0.01, steps)
        x = np.broadcast_to(sigma_y[:, None], (n_samples, steps)).copy()
        y = np.empty((n_samples, steps))
        for i in range(n_samples):
            p = RambergOsgoodParams(
                youngs_modulus=params.youngs_modulus,
                yield_strength=sigma_y[i],
                hardening_exponent=params.hardening_exponent,
            )
            y[i] = [ramberg_osgood_stress(e, p) for e in ramp]
    elif experiment == "plasticity":
        params = PlasticityParams()
        x = np.stack([sample_load_path(rng, steps) for _ in range(n_samples)])
        y = simulate_path(x, params)
    else:
        raise DataError(f"unknown experiment {experiment!r}")
    return x, y


def build_dataset(
    experiment: str,
    sizes: tuple[int, int, int] | None = None,
    steps: int | None = None,
    seed: int = 0,
    eps_max_range: tuple[float, float] = (0.0, 0.001),
):
    """Generate and standardize the (train, val, test) triple.

    Standardization statistics come from the training split only.
    """
    sizes = sizes or DEFAULT_SIZES[experiment]
    steps = steps or DEFAULT_STEPS[experiment]
    rng = make_rng(seed)
    raw = [
        generate_raw(experiment, n, steps, rng, eps_max_range=eps_max_range)
        for n in sizes
    ]
    x_tr, y_tr = raw[0]
    stats = (
        float(x_tr.mean()), float(x_tr.std()),
        float(y_tr.mean()), float(y_tr.std()),
    )
    out = []
    for x, y in raw:
        out.append(
            Dataset(
                x=standardize(x, stats[0], stats[1])[..., None],
                y=standardize(y, stats[2], stats[3])[..., None],
                x_mean=stats[0], x_std=stats[1],
                y_mean=stats[2], y_std=stats[3],
            )
        )
    return tuple(out)


# --- file formats -----------------------------------------------------------

def write_dataset_csv(path: Path, x_raw: np.ndarray, y_raw: np.ndarray) -> None:
    """One row per sample: raw input steps then raw target steps."""
    steps = x_raw.shape[1]
    header = [f"x_t{t}" for t in range(steps)] + [f"y_t{t}" for t in range(steps)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for xi, yi in zip(x_raw, y_raw):
            writer.writerow([f"{v:.17g}" for v in np.concatenate([xi, yi])])


def read_dataset_csv(path: Path):
    """Inverse of :func:`write_dataset_csv`; returns raw ``(x, y)``."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"dataset file not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) for v in row] for row in reader]
    steps = sum(1 for h in header if h.startswith("x_t"))
    data = np.asarray(rows, dtype=np.float64)
    if data.shape[1] != 2 * steps:
        raise DataError(f"malformed dataset file: {path}")
    return data[:, :steps], data[:, steps:]


def write_sidecar(path: Path, experiment: str, steps: int, seed: int, stats) -> None:
    doc = {
        "experiment": experiment,
        "d_t": steps,
        "seed": seed,
        "mean": {"x": stats[0], "y": stats[2]},
        "std": {"x": stats[1], "y": stats[3]},
        "material": material_constants(experiment),
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def read_sidecar(path: Path) -> dict:
    path = Path(path)
    if not path.exists():
        raise DataError(f"sidecar not found: {path}")
    return json.loads(path.read_text())


def load_splits(data_dir: Path):
    """Load gen-command output back into standardized Datasets."""
    data_dir = Path(data_dir)
    meta = read_sidecar(data_dir / "meta.json")
    stats = (meta["mean"]["x"], meta["std"]["x"], meta["mean"]["y"], meta["std"]["y"])
    out = []
    for name in ("train", "val", "test"):
        x, y = read_dataset_csv(data_dir / f"{name}.csv")
        out.append(
            Dataset(
                x=standardize(x, stats[0], stats[1])[..., None],
                y=standardize(y, stats[2], stats[3])[..., None],
                x_mean=stats[0], x_std=stats[1],
                y_mean=stats[2], y_std=stats[3],
            )
        )
    return tuple(out), meta
