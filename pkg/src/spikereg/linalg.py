"""Dense linear algebra, seeded RNG and parameter initialization.

All numeric work is done in 64-bit floats on row-major (C-order) numpy
arrays.  Randomness always flows through :func:`make_rng`, so a fixed seed
reproduces every downstream draw bit-exactly.
"""

from __future__ import annotations

import numpy as np

from .errors import DegenerateScaleError, ShapeError


def make_rng(seed: int) -> np.random.Generator:
    """Return a PCG64 generator for ``seed``.

    Identical seeds yield identical draw sequences.
    """
    return np.random.default_rng(int(seed))


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product with explicit shape checking.

    Accumulation order is the fixed order of the underlying BLAS call,
    which is deterministic run-to-run on a given machine.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"inner dimensions differ: {a.shape} x {b.shape}")
    return a @ b


def uniform_init(rows: int, cols: int, bound: float, rng: np.random.Generator) -> np.ndarray:
    """I.i.d. uniform matrix on ``[-bound, +bound]``."""
    if bound <= 0:
        raise ValueError(f"bound must be positive, got {bound}")
    return rng.uniform(-bound, bound, size=(rows, cols))


def fanin_bound(fan_in: int) -> float:
    """Default init bound ``1/sqrt(fan_in)``."""
    return 1.0 / np.sqrt(max(fan_in, 1))


def standardize(data: np.ndarray, mean: float, std: float) -> np.ndarray:
    """``(data - mean) / std``; inverse of :func:`destandardize`."""
    if std <= 0:
        raise DegenerateScaleError(f"std must be positive, got {std}")
    return (np.asarray(data, dtype=np.float64) - mean) / std


def destandardize(data: np.ndarray, mean: float, std: float) -> np.ndarray:
    """``data * std + mean``."""
    if std <= 0:
        raise DegenerateScaleError(f"std must be positive, got {std}")
    return np.asarray(data, dtype=np.float64) * std + mean
