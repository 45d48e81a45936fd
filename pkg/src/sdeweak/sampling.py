"""Uniform-variate sources, the inverse normal transform, and estimators.

Two interchangeable sources drive the Monte Carlo machinery:

* ``pseudo``: the Philox4x64-10 counter-based generator (numpy's ``Philox``)
  viewed as one global uniform stream; path ``i`` of a D-dimensional problem
  owns stream words ``i*D .. (i+1)*D - 1``.  Uniforms are
  ``((raw >> 11) + 0.5) * 2**-53``, strictly inside (0, 1).
* ``sobol``: an own Sobol low-discrepancy implementation (Gray-code order)
  with Joe-Kuo direction numbers loaded from a bundled data file; raw index 0
  is the all-zeros point and is skipped by default.

Every point is a pure function of (descriptor, index): blocks may be gathered
in any order, in parallel, with bit-identical results.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from numpy.random import Philox

_SOBOL_BITS = 32
_SOBOL_SCALE = 2.0 ** -_SOBOL_BITS
DIRECTION_FILE = "joe_kuo_directions.txt"


# ---------------------------------------------------------------------------
# Sobol
# ---------------------------------------------------------------------------


def _default_direction_path() -> Path:
    return Path(str(resources.files("sdeweak").joinpath("data", DIRECTION_FILE)))


def load_direction_numbers(path: str | Path | None = None) -> list[tuple[int, int, list[int]]]:
    """Parse a direction-number file in the standard ``d s a m_i`` layout.

    Returns rows (s, a, m-list) for dimensions 2, 3, ...; dimension 1 is the
    van der Corput sequence and carries no file entry.
    """
    path = Path(path) if path is not None else _default_direction_path()
    rows: list[tuple[int, int, list[int]]] = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#") or line.lower().startswith("d"):
                continue
            parts = line.split()
            d, s, a = int(parts[0]), int(parts[1]), int(parts[2])
            ms = [int(x) for x in parts[3 : 3 + s]]
            if len(ms) != s:
                raise ValueError(f"dimension {d}: expected {s} initial values, got {len(ms)}")
            rows.append((s, a, ms))
    return rows


@lru_cache(maxsize=4)
def _direction_matrix(dim: int, path: str | None = None) -> np.ndarray:
    """uint32 matrix V[bit, coordinate]; V[k] is the k-th direction number * 2^32."""
    rows = load_direction_numbers(path)
    if dim > len(rows) + 1:
        raise ValueError(
            f"requested {dim} Sobol dimensions; direction table supports {len(rows) + 1}"
        )
    V = np.zeros((_SOBOL_BITS, dim), dtype=np.uint32)
    # first coordinate: van der Corput in base 2
    for k in range(_SOBOL_BITS):
        V[k, 0] = np.uint32(1 << (_SOBOL_BITS - 1 - k))
    for j in range(1, dim):
        s, a, m_init = rows[j - 1]
        m = list(m_init)
        for k in range(s, _SOBOL_BITS):
            new = m[k - s] ^ (m[k - s] << s)
            for i in range(1, s):
                if (a >> (s - 1 - i)) & 1:
                    new ^= m[k - i] << i
            m.append(new)
        for k in range(_SOBOL_BITS):
            V[k, j] = np.uint32(m[k] << (_SOBOL_BITS - 1 - k))
    return V


def _gray_state(index: int, V: np.ndarray) -> np.ndarray:
    """Sobol integer state at one index: XOR of direction rows over gray-code bits."""
    x = np.zeros(V.shape[1], dtype=np.uint32)
    gray = index ^ (index >> 1)
    bit = 0
    while gray:
        if gray & 1:
            x ^= V[bit]
        gray >>= 1
        bit += 1
    return x


def sobol_points(dim: int, start: int, count: int,
                 path: str | None = None) -> np.ndarray:
    """Points start .. start+count-1 of the Sobol sequence, shape (count, dim).

    Gray-code order: consecutive states differ by one direction row, so a
    block is one XOR prefix scan seeded by the directly computed first state.
    Random access and streaming agree bit for bit.
    """
    if count < 0 or start < 0:
        raise ValueError("start and count must be nonnegative")
    if start + count > 1 << _SOBOL_BITS:
        raise ValueError("Sobol index space exhausted (2^32 points)")
    V = _direction_matrix(dim, path)
    if count == 0:
        return np.empty((0, dim))
    idx = np.arange(start + 1, start + count, dtype=np.uint64)
    rows = np.empty((count, dim), dtype=np.uint32)
    rows[0] = _gray_state(start, V)
    if count > 1:
        low = (idx & (~idx + np.uint64(1))).astype(np.float64)  # lowest set bit
        ctz = np.log2(low).astype(np.int64)
        rows[1:] = V[ctz]
    state = np.bitwise_xor.accumulate(rows, axis=0)
    return state.astype(np.float64) * _SOBOL_SCALE


def sobol_point(dim: int, index: int, path: str | None = None) -> np.ndarray:
    """A single raw Sobol point; index 0 is the all-zeros point."""
    V = _direction_matrix(dim, path)
    return _gray_state(index, V).astype(np.float64) * _SOBOL_SCALE


# ---------------------------------------------------------------------------
# Philox pseudo-random stream
# ---------------------------------------------------------------------------


def philox_raw(seed: int, start: int, count: int) -> np.ndarray:
    """Words start .. start+count-1 of the Philox4x64-10 output stream for this seed.

    Counter block c holds words 4c..4c+3, so any offset is reachable by
    setting the 256-bit counter; no sequential state is kept anywhere.
    """
    if count == 0:
        return np.empty(0, dtype=np.uint64)
    block, offset = divmod(start, 4)
    bitgen = Philox(key=seed, counter=block)
    raw = bitgen.random_raw(offset + count)
    return raw[offset:]


def philox_uniforms(seed: int, start: int, count: int) -> np.ndarray:
    """Uniforms in the open interval (0,1): ((raw >> 11) + 0.5) * 2^-53."""
    raw = philox_raw(seed, start, count)
    return ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


# ---------------------------------------------------------------------------
# Uniform sources
# ---------------------------------------------------------------------------

PSEUDO = "pseudo"
SOBOL = "sobol"


@dataclass(frozen=True)
class UniformSource:
    """A random-access source of points in (0,1)^dimension.

    ``seed`` applies to the pseudo kind; ``skip`` shifts the Sobol enumeration
    and defaults to 1 so the all-zeros point never appears (its inverse-normal
    image is -infinity).
    """

    kind: str
    dimension: int
    seed: int = 0
    skip: int = 1

    def __post_init__(self):
        if self.kind not in (PSEUDO, SOBOL):
            raise ValueError(f"kind must be 'pseudo' or 'sobol', got {self.kind!r}")
        if self.dimension < 1:
            raise ValueError("dimension must be >= 1")
        if self.kind == SOBOL and self.skip < 1:
            raise ValueError("sobol skip must be >= 1 (index 0 is the zero point)")

    def block(self, start: int, count: int) -> np.ndarray:
        """Points start .. start+count-1 as an array of shape (count, dimension)."""
        if self.kind == PSEUDO:
            flat = philox_uniforms(self.seed, start * self.dimension, count * self.dimension)
            return flat.reshape(count, self.dimension)
        return sobol_points(self.dimension, self.skip + start, count)

    def point(self, i: int) -> np.ndarray:
        return self.block(i, 1)[0]


# ---------------------------------------------------------------------------
# Inverse normal CDF (AS241, double precision)
# ---------------------------------------------------------------------------

_A = (3.3871328727963666080e0, 1.3314166789178437745e2, 1.9715909503065514427e3,
      1.3731693765509461125e4, 4.5921953931549871457e4, 6.7265770927008700853e4,
      3.3430575583588128105e4, 2.5090809287301226727e3)
_B = (1.0, 4.2313330701600911252e1, 6.8718700749205790830e2, 5.3941960214247511077e3,
      2.1213794301586595867e4, 3.9307895800092710610e4, 2.8729085735721942674e4,
      5.2264952788528545610e3)
_C = (1.42343711074968357734e0, 4.63033784615654529590e0, 5.76949722146069140550e0,
      3.64784832476320460504e0, 1.27045825245236838258e0, 2.41780725177450611770e-1,
      2.27238449892691845833e-2, 7.74545014278341407640e-4)
_D = (1.0, 2.05319162663775882187e0, 1.67638483018380384940e0, 6.89767334985100004550e-1,
      1.48103976427480074590e-1, 1.51986665636164571966e-2, 5.47593808499534494600e-4,
      1.05075007164441684324e-9)
_E = (6.65790464350110377720e0, 5.46378491116411436990e0, 1.78482653991729133580e0,
      2.96560571828504891230e-1, 2.65321895265761230930e-2, 1.24266094738807843860e-3,
      2.71155556874348757815e-5, 2.01033439929228813265e-7)
_F = (1.0, 5.99832206555887937690e-1, 1.36929880922735805310e-1, 1.48753612908506148525e-2,
      7.86869131145613259100e-4, 1.84631831751005468180e-5, 1.42151175831644588870e-7,
      2.04426310338993978564e-15)


def _poly(coeffs: Sequence[float], x: np.ndarray) -> np.ndarray:
    acc = np.full_like(x, coeffs[-1])
    for c in reversed(coeffs[:-1]):
        acc *= x
        acc += c
    return acc


_INV_BLOCK = 1 << 16


def _inv_normal_block(flat: np.ndarray, out: np.ndarray) -> None:
    """AS241 on one flat block; central regime computed unconditionally, tails fixed up."""
    q = flat - 0.5
    r = q * q
    np.negative(r, out=r)
    r += 0.180625
    num = _poly(_A, r)
    den = _poly(_B, r)
    np.divide(num, den, out=out)
    out *= q

    tail = np.abs(q) > 0.425
    if tail.any():
        qt = q[tail]
        rt = np.where(qt < 0, flat[tail], 1.0 - flat[tail])
        np.log(rt, out=rt)
        np.negative(rt, out=rt)
        np.sqrt(rt, out=rt)
        val = np.empty_like(rt)
        near = rt <= 5.0
        if near.any():
            rn = rt[near] - 1.6
            val[near] = _poly(_C, rn) / _poly(_D, rn)
        far = ~near
        if far.any():
            rf = rt[far] - 5.0
            val[far] = _poly(_E, rf) / _poly(_F, rf)
        np.copysign(val, qt, out=val)
        out[tail] = val


def inv_normal_cdf(u):
    """The standard normal quantile, absolute error below 1e-9 on (0, 1).

    Wichura's AS241 rational approximation: a central regime in q = u - 1/2
    and two tail regimes in sqrt(-log(min(u, 1-u))).  Accepts scalars or
    arrays; raises on values outside the open interval.  Large inputs are
    processed in cache-sized blocks.
    """
    arr = np.asarray(u, dtype=float)
    scalar = arr.ndim == 0
    flat = np.atleast_1d(arr).ravel()
    if flat.size and (np.any(flat <= 0.0) or np.any(flat >= 1.0)):
        raise ValueError("inv_normal_cdf requires 0 < u < 1")
    out = np.empty_like(flat)
    for lo in range(0, flat.size, _INV_BLOCK):
        hi = min(lo + _INV_BLOCK, flat.size)
        _inv_normal_block(flat[lo:hi], out[lo:hi])
    return float(out[0]) if scalar else out.reshape(np.shape(u))


def correlate_pair(z: np.ndarray, cov: Sequence[Sequence[float]]) -> np.ndarray:
    """Map iid N(0,1) pairs to covariance ``cov`` by the lower Cholesky factor.

    z has shape (..., 2); returns the same shape.  The degenerate case
    R11 = 0 maps the first component to 0.
    """
    r11, r12 = float(cov[0][0]), float(cov[0][1])
    r22 = float(cov[1][1])
    if abs(float(cov[1][0]) - r12) > 0.0:
        raise ValueError("covariance must be symmetric")
    if r11 < 0 or r22 < 0 or r11 * r22 - r12 * r12 < -1e-12:
        raise ValueError("covariance must be positive semidefinite")
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    if r11 == 0.0:
        if r12 != 0.0:
            raise ValueError("R11 = 0 forces R12 = 0")
        out[..., 0] = 0.0
        out[..., 1] = math.sqrt(r22) * z[..., 1]
        return out
    l11 = math.sqrt(r11)
    l21 = r12 / l11
    l22 = math.sqrt(max(r22 - l21 * l21, 0.0))
    out[..., 0] = l11 * z[..., 0]
    out[..., 1] = l21 * z[..., 0] + l22 * z[..., 1]
    return out


# ---------------------------------------------------------------------------
# Estimation
# ---------------------------------------------------------------------------

MC = "mc"
QMC = "qmc"
MC_BATCHES = 10
CHUNK = 16384


@dataclass(frozen=True)
class EstimatorReport:
    """Point estimate with the error metric of its mode.

    MC error is 2 x the sample standard deviation of the 10 contiguous batch
    means ("2 sigma of 10 batches", deliberately not divided by sqrt(10));
    QMC error is |estimate - reference| when a reference is supplied, else None.
    """

    estimate: float
    error: float | None
    samples: int
    seconds: float
    mode: str
    batch_means: tuple[float, ...] | None = None


def _chunk_ranges(lo: int, hi: int, chunk: int) -> list[tuple[int, int]]:
    return [(a, min(a + chunk, hi)) for a in range(lo, hi, chunk)]


def estimate(payoff: Callable[[np.ndarray], np.ndarray], source: UniformSource, samples: int,
             mode: str, reference: float | None = None, workers: int | None = None,
             chunk: int = CHUNK) -> EstimatorReport:
    """Average ``payoff`` over ``samples`` source points.

    payoff maps a uniform block (count, D) to a value vector (count,).  Points
    are processed in fixed chunks whose sums are reduced in index order, so the
    result is bit-identical for every worker count.  MC mode requires the
    sample count to be divisible by the fixed batch count (10).
    """
    if mode not in (MC, QMC):
        raise ValueError(f"mode must be 'mc' or 'qmc', got {mode!r}")
    if mode == MC and samples % MC_BATCHES != 0:
        raise ValueError(f"MC sample count must be divisible by {MC_BATCHES}")

    t0 = time.perf_counter()
    if mode == MC:
        batch = samples // MC_BATCHES
        bounds = [(b * batch, (b + 1) * batch) for b in range(MC_BATCHES)]
        ranges = [rg for lo, hi in bounds for rg in _chunk_ranges(lo, hi, chunk)]
    else:
        ranges = _chunk_ranges(0, samples, chunk)

    sums = np.zeros(len(ranges))

    def work(item):
        k, (lo, hi) = item
        vals = payoff(source.block(lo, hi - lo))
        return k, float(np.add.reduce(np.asarray(vals, dtype=float)))

    if workers is not None and workers <= 1:
        for it in enumerate(ranges):
            k, s = work(it)
            sums[k] = s
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for k, s in pool.map(work, enumerate(ranges)):
                sums[k] = s

    total = float(np.add.reduce(sums))
    mean = total / samples
    seconds = time.perf_counter() - t0

    if mode == QMC:
        err = abs(mean - reference) if reference is not None else None
        return EstimatorReport(mean, err, samples, seconds, mode)

    batch_means = []
    pos = 0
    for lo, hi in bounds:
        n_chunks = len(_chunk_ranges(lo, hi, chunk))
        batch_sum = float(np.add.reduce(sums[pos:pos + n_chunks]))
        batch_means.append(batch_sum / (hi - lo))
        pos += n_chunks
    sd = float(np.std(batch_means, ddof=1))
    return EstimatorReport(mean, 2.0 * sd, samples, seconds, mode, tuple(batch_means))
