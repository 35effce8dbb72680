"""Dense linear algebra helpers, special functions and a reproducible RNG.

Matrices are plain float64 numpy arrays; :func:`matmul` adds the shape and
finiteness contract on top of numpy's product. The special functions are
written out here (series / continued fraction for the incomplete gamma
function) so that threshold arithmetic does not depend on a particular
libm or scipy build.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DomainError, NonFiniteError, ShapeError

Matrix = np.ndarray

_EPS = 1e-16
_MAX_ITER = 10_000
_TINY = 1e-300


def as_matrix(data, rows: int | None = None, cols: int | None = None) -> Matrix:
    """Build a float64 matrix, optionally from flat row-major data."""
    arr = np.array(data, dtype=np.float64)
    if rows is not None and cols is not None:
        if arr.size != rows * cols:
            raise ShapeError(f"need {rows * cols} values for a {rows}x{cols} matrix, got {arr.size}")
        arr = arr.reshape(rows, cols)
    if arr.ndim != 2:
        raise ShapeError(f"matrix must be 2-D, got shape {arr.shape}")
    check_finite(arr, "matrix")
    return arr


def identity(n: int) -> Matrix:
    return np.eye(n, dtype=np.float64)


def check_finite(arr, what: str = "value"):
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"non-finite {what}")
    return arr


def matmul(a: Matrix, b: Matrix) -> Matrix:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul needs 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return check_finite(a @ b, "matmul result")


# --------------------------------------------------------------------------
# incomplete gamma / erfc / chi-square


def _gamma_p_series(a: float, x: float) -> float:
    # P(a, x) = x^a e^-x / Gamma(a+1) * sum_n x^n / ((a+1)...(a+n))
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(_MAX_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    else:
        raise NonFiniteError(f"gamma series did not converge for a={a}, x={x}")
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_q_cfrac(a: float, x: float) -> float:
    # Modified Lentz evaluation of the Legendre continued fraction for Q(a, x).
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    else:
        raise NonFiniteError(f"gamma continued fraction did not converge for a={a}, x={x}")
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h


def gammainc_upper(a: float, x: float) -> float:
    """Regularized upper incomplete gamma function Q(a, x)."""
    if a <= 0 or x < 0 or not math.isfinite(x):
        raise DomainError(f"Q(a, x) needs a > 0 and finite x >= 0, got a={a}, x={x}")
    if x == 0.0:
        return 1.0
    if x < a + 1.0:
        return 1.0 - _gamma_p_series(a, x)
    return _gamma_q_cfrac(a, x)


def erfc(x: float) -> float:
    """Complementary error function, erfc(x) = Q(1/2, x^2) for x >= 0."""
    x = float(x)
    if not math.isfinite(x):
        raise DomainError(f"erfc needs a finite argument, got {x}")
    q = gammainc_upper(0.5, x * x)
    return q if x >= 0 else 2.0 - q


def chi2_sf(x: float, k: int) -> float:
    """Upper tail probability P(X > x) of a chi-square variable with k dof."""
    if k < 1 or int(k) != k:
        raise DomainError(f"degrees of freedom must be a positive integer, got {k}")
    if x < 0 or not math.isfinite(x):
        raise DomainError(f"chi2_sf needs finite x >= 0, got {x}")
    return gammainc_upper(0.5 * k, 0.5 * x)


def normal_cdf(x: float) -> float:
    return 0.5 * erfc(-x / math.sqrt(2.0))


# --------------------------------------------------------------------------
# random numbers

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1


def _mix64(z: np.ndarray) -> np.ndarray:
    # SplitMix64 finalizer; uint64 array arithmetic wraps modulo 2**64.
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def derive_seed(seed: int, *keys: int) -> int:
    """Child seed for an independent stream, e.g. one per epoch or lane."""
    z = np.array([seed & _MASK64], dtype=np.uint64)
    for key in keys:
        z = _mix64(z ^ _mix64(np.array([(key + 1) & _MASK64], dtype=np.uint64) * _GOLDEN))
    return int(z[0])


class SeededRng:
    """Counter-based SplitMix64 generator.

    Output i of a stream is ``mix(seed + (i + 1) * golden)`` so a block of
    draws is produced with vectorized uint64 arithmetic and the stream is
    identical on every platform. Not thread-safe; fork with :meth:`spawn`.
    """

    def __init__(self, seed: int):
        if seed < 0 or seed > _MASK64:
            raise DomainError(f"seed must fit in 64 unsigned bits, got {seed}")
        self.seed = int(seed)
        self.counter = 0

    def spawn(self, *keys: int) -> "SeededRng":
        return SeededRng(derive_seed(self.seed, *keys))

    def bits(self, n: int) -> np.ndarray:
        idx = np.arange(self.counter + 1, self.counter + n + 1, dtype=np.uint64)
        self.counter += n
        return _mix64(np.uint64(self.seed) + idx * _GOLDEN)

    def uniform(self, size: int | tuple = None, low: float = 0.0, high: float = 1.0):
        """Uniform draws on the open interval (low, high)."""
        n = 1 if size is None else int(np.prod(size))
        u = ((self.bits(n) >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53
        u = low + (high - low) * u
        return float(u[0]) if size is None else u.reshape(size)

    def normal(self, size: int | tuple = None, mean: float = 0.0, sd: float = 1.0):
        """Gaussian draws by Box-Muller (cosine branch only)."""
        if sd < 0:
            raise DomainError(f"standard deviation must be >= 0, got {sd}")
        n = 1 if size is None else int(np.prod(size))
        u = self.uniform(2 * n)
        z = np.sqrt(-2.0 * np.log(u[:n])) * np.cos(2.0 * np.pi * u[n:])
        z = mean + sd * z
        return float(z[0]) if size is None else z.reshape(size)

    def integers(self, high: int) -> int:
        """Integer in [0, high)."""
        if high < 1:
            raise DomainError(f"high must be >= 1, got {high}")
        return int(self.uniform() * high) % high


def sample_normal(rng: SeededRng, mean: float, sd: float) -> float:
    if sd < 0:
        raise DomainError(f"standard deviation must be >= 0, got {sd}")
    z = rng.normal()
    return mean if sd == 0 else mean + sd * z
