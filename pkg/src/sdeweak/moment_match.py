"""Moment matching for the Gaussian splitting construction.

The scheme draws Lie-series random variables Z_j = c_j v0 + sum_i S^i_j v_i
with E[S^i_j S^i'_j'] = R_jj' delta_ii', chosen so that the expected product
of exponentials matches exp(v0 + (1/2) sum_i v_i^2) coefficient by
coefficient on every word of scaled degree <= m.  This module computes both
sides exactly, exposes the closed-form m=5 / M=2 solution family, and runs
best-effort residual-minimization searches for the infeasible cases.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .freealg import EXACT, FLOAT, TruncatedSeries, Word, words_up_to

Matrix = tuple[tuple, ...]


# ---------------------------------------------------------------------------
# Gaussian moments
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GaussianSpec:
    """A centered Gaussian vector (Y_1, ..., Y_M) given by its covariance matrix."""

    covariance: Matrix

    def __post_init__(self):
        cov = tuple(tuple(row) for row in self.covariance)
        object.__setattr__(self, "covariance", cov)
        n = len(cov)
        if any(len(row) != n for row in cov):
            raise ValueError("covariance must be square")
        for i in range(n):
            for j in range(n):
                if cov[i][j] != cov[j][i]:
                    raise ValueError("covariance must be symmetric")

    @property
    def M(self) -> int:
        return len(self.covariance)


def _compositions(total: int, parts: int) -> Iterable[tuple[int, ...]]:
    """All tuples of `parts` nonnegative integers summing to `total`."""
    if parts == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def gaussian_moment(spec: GaussianSpec, powers: Sequence[int]) -> Fraction | float:
    """E[Y_1^m_1 ... Y_M^m_M] by the closed-form sum over pairing-count matrices.

    The sum runs over symmetric nonnegative integer matrices (d_ij), i <= j,
    with row condition sum_{j<i} d_ji + 2 d_ii + sum_{j>i} d_ij = m_i; each
    contributes 2^(-sum d_ii) * prod(m_i!) / prod(d_ij!) * prod R_ij^d_ij.
    Odd total degree gives 0 by symmetry.
    """
    cov = spec.covariance
    m = tuple(int(p) for p in powers)
    M = len(m)
    if M != spec.M:
        raise ValueError(f"powers length {M} does not match covariance size {spec.M}")
    if any(p < 0 for p in m):
        raise ValueError("powers must be nonnegative")
    if sum(m) % 2 == 1:
        return Fraction(0) if _is_exact(itertools.chain.from_iterable(cov)) else 0.0

    pairs = [(i, j) for i in range(M) for j in range(i, M)]
    numer = math.prod(math.factorial(p) for p in m)
    exact = _is_exact(itertools.chain.from_iterable(cov))
    total = Fraction(0) if exact else 0.0

    def assign(k: int, remaining: list[int], dfact: int, diag: int, rprod) -> None:
        nonlocal total
        if k == len(pairs):
            if all(r == 0 for r in remaining):
                coeff = Fraction(numer, dfact * 2**diag) if exact else numer / (dfact * 2.0**diag)
                total += coeff * rprod
            return
        i, j = pairs[k]
        if i == j:
            top = remaining[i] // 2
        else:
            top = min(remaining[i], remaining[j])
        r = cov[i][j]
        val = 1
        for d in range(top + 1):
            remaining[i] -= 2 * d if i == j else d
            if i != j:
                remaining[j] -= d
            assign(k + 1, remaining, dfact * math.factorial(d), diag + (d if i == j else 0),
                   rprod * val)
            remaining[i] += 2 * d if i == j else d
            if i != j:
                remaining[j] += d
            val = val * r

    assign(0, list(m), 1, 0, Fraction(1) if exact else 1.0)
    return total


def gaussian_moment_pairings(spec: GaussianSpec, powers: Sequence[int]) -> Fraction | float:
    """Brute-force Isserlis oracle: sum over perfect matchings of the product terms.

    Enumerates every pairing of the multiset {Y_i repeated m_i times} and sums
    the products of pairwise covariances.  Exponential cost; intended for
    small total degree in tests and as the substitution rule of
    :func:`symbolic_expectation`.
    """
    cov = spec.covariance
    labels: list[int] = []
    for i, p in enumerate(powers):
        labels.extend([i] * int(p))
    exact = _is_exact(itertools.chain.from_iterable(cov))
    if len(labels) % 2 == 1:
        return Fraction(0) if exact else 0.0

    def match(items: tuple[int, ...]):
        if not items:
            return Fraction(1) if exact else 1.0
        first, rest = items[0], items[1:]
        acc = Fraction(0) if exact else 0.0
        for k in range(len(rest)):
            factor = cov[first][rest[k]]
            if factor != 0:
                acc += factor * match(rest[:k] + rest[k + 1:])
        return acc

    return match(tuple(labels))


def _is_exact(values) -> bool:
    return all(isinstance(v, (int, Fraction)) for v in values)


# ---------------------------------------------------------------------------
# Scheme parameters
# ---------------------------------------------------------------------------

UPPER = "upper"
LOWER = "lower"


@dataclass(frozen=True)
class SchemeParams:
    """The (u, branch, c, R) tuple defining the scheme's Gaussian family.

    c1 + c2 must equal 1 and R must be a valid covariance.  Instances built by
    :func:`solution_params` additionally satisfy the m=5 / M=2 matching
    identities; hand-built or perturbed instances need not.
    """

    u: Fraction | float
    branch: str
    c1: Fraction | float
    c2: Fraction | float
    r11: Fraction | float
    r12: Fraction | float
    r22: Fraction | float

    def __post_init__(self):
        if self.branch not in (UPPER, LOWER):
            raise ValueError(f"branch must be 'upper' or 'lower', got {self.branch!r}")
        tol = 0 if self.is_exact else 1e-12
        if abs(self.c1 + self.c2 - 1) > tol:
            raise ValueError("c1 + c2 must equal 1")
        if self.r11 < 0 or self.r22 < 0 or self.r11 * self.r22 - self.r12**2 < -tol:
            raise ValueError("R must be positive semidefinite")

    @property
    def is_exact(self) -> bool:
        return _is_exact((self.u, self.c1, self.c2, self.r11, self.r12, self.r22))

    @property
    def mode(self) -> str:
        return EXACT if self.is_exact else FLOAT

    @property
    def c(self) -> tuple:
        return (self.c1, self.c2)

    @property
    def covariance(self) -> Matrix:
        return ((self.r11, self.r12), (self.r12, self.r22))

    @property
    def gaussian_spec(self) -> GaussianSpec:
        return GaussianSpec(self.covariance)

    def perturbed(self, **deltas) -> "SchemeParams":
        """A copy with R entries shifted; keys r11, r12, r22 (case-insensitive)."""
        fields = {"r11": self.r11, "r12": self.r12, "r22": self.r22}
        for key, delta in deltas.items():
            k = key.lower()
            if k not in fields:
                raise ValueError(f"only R entries can be perturbed, got {key!r}")
            fields[k] = fields[k] + delta
        return SchemeParams(self.u, self.branch, self.c1, self.c2, **fields)

    def as_float(self) -> "SchemeParams":
        return SchemeParams(
            float(self.u), self.branch, float(self.c1), float(self.c2),
            float(self.r11), float(self.r12), float(self.r22),
        )


def solution_params(u, branch: str = LOWER) -> SchemeParams:
    """The closed-form m=5 / M=2 solution family, parameterized by u >= 1/2.

    The two sign branches coincide at u = 1/2.  Exact rationals are used when
    sqrt(2(2u-1)) is rational, floats otherwise.
    """
    if branch not in (UPPER, LOWER):
        raise ValueError(f"branch must be 'upper' or 'lower', got {branch!r}")
    if isinstance(u, (int, Fraction)):
        u = Fraction(u)
    else:
        u = float(u)
    if u < Fraction(1, 2):
        raise ValueError(f"u must be >= 1/2, got {u}")
    disc = 2 * (2 * u - 1)
    root: Fraction | float
    if isinstance(u, Fraction):
        num, den = disc.numerator, disc.denominator
        rn, rd = math.isqrt(num), math.isqrt(den)
        if rn * rn == num and rd * rd == den:
            root = Fraction(rn, rd)
        else:
            u = float(u)
            root = math.sqrt(float(disc))
    else:
        root = math.sqrt(disc)
    half = root / 2
    if branch == UPPER:
        c1, c2 = -half, 1 + half
        r22 = 1 + u + root
        r12 = -u - half
    else:
        c1, c2 = half, 1 - half
        r22 = 1 + u - root
        r12 = -u + half
    return SchemeParams(u, branch, c1, c2, u, r12, r22)


DEFAULT_PARAMS = solution_params(Fraction(3, 4), LOWER)


# ---------------------------------------------------------------------------
# Coefficients of E[exp(Z_1) ... exp(Z_M)]
# ---------------------------------------------------------------------------


def _segment_counts(letters: tuple[int, ...], k: tuple[int, ...], letter: int) -> tuple[int, ...]:
    """Occurrences of `letter` within each of the consecutive length-k_j segments."""
    counts = []
    pos = 0
    for kj in k:
        counts.append(sum(1 for r in range(pos, pos + kj) if letters[r] == letter))
        pos += kj
    return tuple(counts)


def product_coefficient(c: Sequence, spec: GaussianSpec, w: Word):
    """Coefficient of the word w in E[exp(Z_1) ... exp(Z_M)] for general M.

    Sums over all splits of w into M consecutive segments; segment j's letters
    are drawn from Z_j, so the v0 letters contribute c_j powers and the
    Brownian letters contribute a joint Gaussian moment per letter index.
    Words in which some Brownian letter occurs an odd number of times have
    coefficient zero.
    """
    letters = w.letters
    M = len(c)
    if M != spec.M:
        raise ValueError("c and covariance sizes differ")
    exact = _is_exact(c) and _is_exact(itertools.chain.from_iterable(spec.covariance))
    zero = Fraction(0) if exact else 0.0
    brownian = sorted({i for i in letters if i != 0})
    for p in brownian:
        if sum(1 for i in letters if i == p) % 2 == 1:
            return zero

    total = zero
    for k in _compositions(len(letters), M):
        kfact = math.prod(math.factorial(kj) for kj in k)
        term = Fraction(1, kfact) if exact else 1.0 / kfact
        for j in range(M):
            n0 = _segment_counts(letters, k, 0)[j]
            if n0:
                term *= c[j] ** n0
        if term == 0:
            continue
        for p in brownian:
            mom = gaussian_moment(spec, _segment_counts(letters, k, p))
            if mom == 0:
                term = zero
                break
            term *= mom
        total += term
    return total


def scheme_coefficient(params: SchemeParams, w: Word, d: int | None = None):
    """C(w) = <E[exp(Z_1) exp(Z_2)], w> for the two-factor scheme."""
    if d is not None and any(i > d for i in w.letters):
        raise ValueError(f"word {w} uses letters beyond v{d}")
    return product_coefficient(params.c, params.gaussian_spec, w)


def target_coefficient(w: Word) -> Fraction:
    """Coefficient of w in exp(v0 + (1/2) sum v_i^2).

    Nonzero exactly when w factors into blocks from {v0, v1v1, ..., vdvd};
    the factorization is unique when it exists (a block starting at v0 must be
    the singleton block, a block starting at v_i must be v_i v_i), and the
    value is 1 / (2^(|w|-l) l!) with l the number of blocks.
    """
    letters = w.letters
    blocks = 0
    idx = 0
    n = len(letters)
    while idx < n:
        if letters[idx] == 0:
            idx += 1
        elif idx + 1 < n and letters[idx + 1] == letters[idx]:
            idx += 2
        else:
            return Fraction(0)
        blocks += 1
    return Fraction(1, 2 ** (n - blocks) * math.factorial(blocks))


# ---------------------------------------------------------------------------
# Symbolic expectation (the brute-force oracle)
# ---------------------------------------------------------------------------

# A monomial in the Gaussian symbols S^i_j is a sorted tuple of (i, j) pairs
# with multiplicity; a polynomial maps monomials to scalar coefficients.
_Monomial = tuple[tuple[int, int], ...]
_Poly = dict[_Monomial, Fraction]


def _poly_mul(a: _Poly, b: _Poly) -> _Poly:
    out: _Poly = {}
    for ma, ca in a.items():
        for mb, cb in b.items():
            key = tuple(sorted(ma + mb))
            out[key] = out.get(key, 0) + ca * cb
    return out


def symbolic_expectation(params: SchemeParams, m: int, d: int) -> TruncatedSeries:
    """E[j_m(exp(Z_1) exp(Z_2))] by full symbolic expansion.

    Expands the product of exponentials with the S^i_j kept as symbols, then
    replaces every symbol monomial by its Gaussian moment computed by
    brute-force pairing enumeration.  Exponentially slower than
    :func:`scheme_coefficient`, and deliberately independent of it: this is
    the oracle the closed form is tested against.
    """
    exact = params.is_exact
    one = Fraction(1) if exact else 1.0

    def z_series(j: int) -> dict[Word, _Poly]:
        out: dict[Word, _Poly] = {Word((0,)): {(): params.c[j] * one}}
        for i in range(1, d + 1):
            out[Word((i,))] = {((i, j + 1),): one}
        return out

    def series_mul(a: dict[Word, _Poly], b: dict[Word, _Poly]) -> dict[Word, _Poly]:
        out: dict[Word, _Poly] = {}
        for wa, pa in a.items():
            da = wa.scaled_degree
            for wb, pb in b.items():
                if da + wb.scaled_degree > m:
                    continue
                w = wa * wb
                prod = _poly_mul(pa, pb)
                if w in out:
                    tgt = out[w]
                    for mono, coeff in prod.items():
                        tgt[mono] = tgt.get(mono, 0) + coeff
                else:
                    out[w] = prod
        return out

    def series_exp(z: dict[Word, _Poly]) -> dict[Word, _Poly]:
        result: dict[Word, _Poly] = {Word(()): {(): one}}
        power: dict[Word, _Poly] = {Word(()): {(): one}}
        for k in range(1, m + 1):
            power = series_mul(power, z)
            if not power:
                break
            inv = Fraction(1, math.factorial(k)) if exact else 1.0 / math.factorial(k)
            for w, poly in power.items():
                tgt = result.setdefault(w, {})
                for mono, coeff in poly.items():
                    tgt[mono] = tgt.get(mono, 0) + coeff * inv
        return result

    product = series_mul(series_exp(z_series(0)), series_exp(z_series(1)))
    spec = params.gaussian_spec

    coeffs: dict[Word, Fraction | float] = {}
    for w, poly in product.items():
        acc = Fraction(0) if exact else 0.0
        for mono, coeff in poly.items():
            if coeff == 0:
                continue
            factor = one
            for i in sorted({i for i, _ in mono}):
                powers = tuple(sum(1 for a, b in mono if (a, b) == (i, j)) for j in (1, 2))
                mom = gaussian_moment_pairings(spec, powers)
                if mom == 0:
                    factor = 0
                    break
                factor *= mom
            if factor != 0:
                acc += coeff * factor
        if acc != 0:
            coeffs[w] = acc
    return TruncatedSeries(coeffs, m, params.mode)


# ---------------------------------------------------------------------------
# Residuals
# ---------------------------------------------------------------------------


def residual_table(params: SchemeParams, m: int, d: int) -> list[tuple[Word, object, object, object]]:
    """Rows (word, C(w), target, residual) for every word of scaled degree <= m."""
    rows = []
    for w in words_up_to(m, d):
        cw = scheme_coefficient(params, w)
        tw = target_coefficient(w)
        if not params.is_exact:
            tw = float(tw)
        rows.append((w, cw, tw, cw - tw))
    return rows


def moment_residuals(params: SchemeParams, m: int, d: int) -> dict[Word, object]:
    """Map word -> C(w) - target(w) over all words of scaled degree <= m."""
    return {w: r for w, _, _, r in residual_table(params, m, d)}


def max_residual(params: SchemeParams, m: int, d: int) -> float:
    return max(abs(float(r)) for r in moment_residuals(params, m, d).values())


# ---------------------------------------------------------------------------
# Best-effort infeasibility searches
# ---------------------------------------------------------------------------


class _ResidualPolynomial:
    """The residual vector as a polynomial in (c_1..c_M, R_11, R_12, ..., R_MM).

    Precomputes, for every word of scaled degree <= m over {v0, ..., vd} in
    which each Brownian letter occurs an even number of times, the monomial
    expansion of C(w); evaluation is then a small numpy computation, fast
    enough for multi-start searches.  d >= 2 matters: with a single Brownian
    letter the m=7 / M=3 system turns out to be solvable, and only the mixed
    words (the covariance R being shared across letter indices) make it
    overdetermined.
    """

    def __init__(self, m: int, M: int, d: int = 2):
        self.m = m
        self.M = M
        self.d = d
        pairs = [(i, j) for i in range(M) for j in range(i, M)]
        self.nvars = M + len(pairs)
        pair_index = {p: M + k for k, p in enumerate(pairs)}

        words = []
        for w in words_up_to(m, d):
            if all(sum(1 for i in w.letters if i == p) % 2 == 0 for p in range(1, d + 1)):
                words.append(w)
        self.words = words

        coeffs: list[float] = []
        exps: list[list[int]] = []
        word_ids: list[int] = []
        for wi, w in enumerate(words):
            letters = w.letters
            brownian = sorted({i for i in letters if i != 0})
            for k in _compositions(len(letters), M):
                base = 1.0 / math.prod(math.factorial(kj) for kj in k)
                c_exp = [0] * self.nvars
                for j in range(M):
                    c_exp[j] = _segment_counts(letters, k, 0)[j]
                per_letter = [self._moment_terms(_segment_counts(letters, k, p), pairs)
                              for p in brownian]
                for combo in itertools.product(*per_letter):
                    e = list(c_exp)
                    const = base
                    for term_const, dvec in combo:
                        const *= term_const
                        for p, dval in zip(pairs, dvec):
                            e[pair_index[p]] += dval
                    coeffs.append(const)
                    exps.append(e)
                    word_ids.append(wi)
        self.coeffs = np.asarray(coeffs)
        self.exps = np.asarray(exps, dtype=np.int64)
        self.word_ids = np.asarray(word_ids, dtype=np.int64)
        self.targets = np.asarray([float(target_coefficient(w)) for w in words])

    @staticmethod
    def _moment_terms(powers: tuple[int, ...], pairs) -> list[tuple[float, tuple[int, ...]]]:
        """Expansion of the Gaussian moment for `powers` as (constant, d_ij exponents)."""
        if sum(powers) % 2 == 1:
            return []
        numer = math.prod(math.factorial(p) for p in powers)
        out: list[tuple[float, tuple[int, ...]]] = []

        def assign(k: int, remaining: list[int], dvec: list[int]) -> None:
            if k == len(pairs):
                if all(r == 0 for r in remaining):
                    dfact = math.prod(math.factorial(dv) for dv in dvec)
                    diag = sum(dv for (i, j), dv in zip(pairs, dvec) if i == j)
                    out.append((numer / (dfact * 2.0**diag), tuple(dvec)))
                return
            i, j = pairs[k]
            top = remaining[i] // 2 if i == j else min(remaining[i], remaining[j])
            for dval in range(top + 1):
                remaining[i] -= 2 * dval if i == j else dval
                if i != j:
                    remaining[j] -= dval
                assign(k + 1, remaining, dvec + [dval])
                remaining[i] += 2 * dval if i == j else dval
                if i != j:
                    remaining[j] += dval

        assign(0, list(powers), [])
        return out

    def residuals(self, x: np.ndarray) -> np.ndarray:
        terms = self.coeffs * np.prod(x[None, :] ** self.exps, axis=1)
        vals = np.zeros(len(self.words))
        np.add.at(vals, self.word_ids, terms)
        return vals - self.targets

    def norm(self, x: np.ndarray) -> float:
        return float(np.sqrt(np.sum(self.residuals(x) ** 2)))


def _nelder_mead(f, x0: np.ndarray, scale: float = 0.5, iters: int = 400,
                 tol: float = 1e-12) -> tuple[np.ndarray, float]:
    """Minimal deterministic Nelder-Mead; enough for low-dimensional smooth residuals."""
    n = len(x0)
    simplex = [np.array(x0, dtype=float)]
    for i in range(n):
        pt = np.array(x0, dtype=float)
        pt[i] += scale
        simplex.append(pt)
    vals = [f(p) for p in simplex]
    for _ in range(iters):
        order = np.argsort(vals)
        simplex = [simplex[i] for i in order]
        vals = [vals[i] for i in order]
        if vals[-1] - vals[0] < tol:
            break
        centroid = np.mean(simplex[:-1], axis=0)
        worst = simplex[-1]
        refl = centroid + (centroid - worst)
        fr = f(refl)
        if fr < vals[0]:
            expd = centroid + 2.0 * (centroid - worst)
            fe = f(expd)
            if fe < fr:
                simplex[-1], vals[-1] = expd, fe
            else:
                simplex[-1], vals[-1] = refl, fr
        elif fr < vals[-2]:
            simplex[-1], vals[-1] = refl, fr
        else:
            contr = centroid + 0.5 * (worst - centroid)
            fc = f(contr)
            if fc < vals[-1]:
                simplex[-1], vals[-1] = contr, fc
            else:
                best = simplex[0]
                simplex = [best] + [best + 0.5 * (p - best) for p in simplex[1:]]
                vals = [vals[0]] + [f(p) for p in simplex[1:]]
    best = int(np.argmin(vals))
    return simplex[best], float(vals[best])


def _theta_to_x(theta: np.ndarray, M: int) -> np.ndarray:
    """Map free parameters (c_1..c_{M-1}, lower-triangular L) to (c, R) variables.

    R = L L^T keeps the covariance positive semidefinite throughout the search;
    the last drift weight is 1 - sum of the others.
    """
    c = np.empty(M)
    c[: M - 1] = theta[: M - 1]
    c[M - 1] = 1.0 - np.sum(theta[: M - 1])
    L = np.zeros((M, M))
    idx = M - 1
    for i in range(M):
        for j in range(i + 1):
            L[i, j] = theta[idx]
            idx += 1
    R = L @ L.T
    x = np.empty(M + M * (M + 1) // 2)
    x[:M] = c
    k = M
    for i in range(M):
        for j in range(i, M):
            x[k] = R[i, j]
            k += 1
    return x


def infeasibility_search(m: int, M: int, d: int = 2, starts: int = 24, iters: int = 500,
                         seed: int = 0) -> tuple[float, np.ndarray]:
    """Multi-start residual minimization for the level-m matching with M factors.

    Returns the smallest residual norm found and the corresponding (c, R)
    variable vector.  This is a numerical smoke test, not a proof: a large
    value is evidence of infeasibility, never a certificate.  d defaults to 2
    because the single-letter (d=1) system is strictly weaker; see
    :class:`_ResidualPolynomial`.
    """
    poly = _ResidualPolynomial(m, M, d)
    nfree = (M - 1) + M * (M + 1) // 2
    rng = np.random.default_rng(seed)

    def objective(theta: np.ndarray) -> float:
        return poly.norm(_theta_to_x(theta, M))

    best_val = math.inf
    best_x = None
    for _ in range(starts):
        theta0 = rng.uniform(-1.5, 1.5, size=nfree)
        theta, val = _nelder_mead(objective, theta0, scale=0.4, iters=iters)
        if val < best_val:
            best_val = val
            best_x = _theta_to_x(theta, M)
    return best_val, best_x


def single_factor_search(m: int = 5, d: int = 2, grid: int = 41) -> float:
    """Best residual norm at level m with a single factor (M = 1).

    Grid scan over (c_1, R_11) followed by local polishing of the best cells.
    """
    poly = _ResidualPolynomial(m, 1, d)

    def objective(theta: np.ndarray) -> float:
        c1, ell = theta
        return poly.norm(np.array([c1, ell * ell]))

    cells = []
    for c1 in np.linspace(-1.0, 2.0, grid):
        for ell in np.linspace(0.0, 2.0, grid):
            cells.append((objective(np.array([c1, ell])), c1, ell))
    cells.sort(key=lambda t: t[0])
    best = cells[0][0]
    for val, c1, ell in cells[:5]:
        _, polished = _nelder_mead(objective, np.array([c1, ell]), scale=0.1, iters=300)
        best = min(best, polished)
    return best
