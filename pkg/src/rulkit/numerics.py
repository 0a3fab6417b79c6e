"""Dense matrix math, stable nonlinearities, and the seeded RNG.

Matrices are plain float64 numpy arrays. All randomness in the toolkit
(weight init, epoch shuffles, the engine split) flows through SeededRng,
which wraps numpy's PCG64 generator: a documented, seedable algorithm with
fixed constants, so identical seeds give identical streams on any platform.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, ShapeError

Matrix = np.ndarray


def matmul(a: Matrix, b: Matrix) -> Matrix:
    """Standard matrix product; raises ShapeError reporting both shapes."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    return a @ b


def sigmoid(m: Matrix) -> Matrix:
    """Numerically stable logistic: never exponentiates a positive argument."""
    m = np.asarray(m, dtype=np.float64)
    out = np.empty_like(m)
    pos = m >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-m[pos]))
    em = np.exp(m[~pos])
    out[~pos] = em / (1.0 + em)
    return out


def tanh(m: Matrix) -> Matrix:
    return np.tanh(np.asarray(m, dtype=np.float64))


def relu(m: Matrix) -> Matrix:
    return np.maximum(np.asarray(m, dtype=np.float64), 0.0)


ACTIVATIONS = {"sigmoid": sigmoid, "tanh": tanh, "relu": relu}


def elementwise(name: str, m: Matrix) -> Matrix:
    """Apply one of the named activations elementwise, preserving shape."""
    try:
        fn = ACTIVATIONS[name]
    except KeyError:
        raise ConfigError(f"unknown activation {name!r}; expected one of {sorted(ACTIVATIONS)}") from None
    return fn(m)


class SeededRng:
    """Deterministic random source (numpy PCG64 behind a fixed-seed Generator)."""

    def __init__(self, seed: int):
        if seed < 0:
            raise ConfigError(f"seed must be non-negative, got {seed}")
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    @property
    def generator(self) -> np.random.Generator:
        """Underlying generator, for draws beyond uniform/shuffle."""
        return self._gen

    def uniform(self, lo: float, hi: float, shape: tuple[int, ...] | int) -> Matrix:
        """Uniform draws in [lo, hi); requires lo < hi."""
        if not lo < hi:
            raise ConfigError(f"uniform bounds require lo < hi, got lo={lo}, hi={hi}")
        return self._gen.uniform(lo, hi, size=shape).astype(np.float64, copy=False)

    def shuffle(self, n: int) -> np.ndarray:
        """Unbiased permutation of 0..n-1 (Fisher-Yates inside numpy)."""
        if n < 0:
            raise ConfigError(f"shuffle length must be >= 0, got {n}")
        return self._gen.permutation(n)
