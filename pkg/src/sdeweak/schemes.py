"""Weak-approximation drivers over a path-functional payoff.

Three one-step maps over a common SDE model: the new splitting scheme (two
correlated Gaussian vector-field draws per step, each flowed by a certified
Runge-Kutta integrator), the Euler-Maruyama baseline, and the
reference-reconstructed N-V competitor.  A step plan fixes the scheme kind,
the partition count, and exactly how a path's uniform block is consumed, so
that pseudo-random and low-discrepancy sources are interchangeable.

Uniform consumption order (part of the public contract; QMC accuracy depends
on it): step-major, then Brownian index, then the factor index j = 1, 2 for
the splitting scheme.  The N-V block per step is the Bernoulli uniform first,
then the d Gaussian uniforms.  Bernoulli maps u >= 1/2 to +1.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .moment_match import SchemeParams
from .rk_integrator import IntegrationScheme, VectorField, integrate
from .sampling import correlate_pair, inv_normal_cdf

NN = "nn"
EM = "em"
NV = "nv"
_KINDS = (NN, EM, NV)


@dataclass(frozen=True)
class SDEModel:
    """A Stratonovich SDE dX = sum_i V_i(X) o dB^i plus its Ito-form drift.

    The diffusion columns of the Ito form are the Stratonovich fields V_1..V_d
    (true whenever, as for Heston, only the drift picks up a correction).
    ``fused_combination``, when given, evaluates sum_k coeffs[k] V_k(y) in one
    pass; it must agree with the per-field sum and exists purely for speed.
    """

    dim: int
    brownian_dim: int
    stratonovich: tuple[VectorField, ...]
    ito_drift: VectorField
    fused_combination: Callable | None = None

    def __post_init__(self):
        if len(self.stratonovich) != self.brownian_dim + 1:
            raise ValueError("need d+1 Stratonovich fields V0..Vd")
        if any(f.dimension != self.dim for f in self.stratonovich) or \
                self.ito_drift.dimension != self.dim:
            raise ValueError("field dimensions disagree with the state dimension")

    def combination(self, y: np.ndarray, coeffs: Sequence) -> np.ndarray:
        """sum_k coeffs[k] V_k(y); scalar or per-path (P,) coefficients."""
        if self.fused_combination is not None:
            return self.fused_combination(y, coeffs)
        acc = None
        for c, field in zip(coeffs, self.stratonovich):
            if isinstance(c, np.ndarray) and c.ndim == y.ndim - 1:
                c = c[..., None]
            term = c * field(y)
            acc = term if acc is None else acc + term
        return acc


@dataclass(frozen=True)
class SchemeStepPlan:
    """Scheme kind, partition count, and the per-path uniform layout."""

    kind: str
    partitions: int
    params: SchemeParams | None = None
    integrator: IntegrationScheme | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"kind must be one of {_KINDS}, got {self.kind!r}")
        if self.partitions < 1:
            raise ValueError("partitions must be >= 1")
        if self.kind == NN and (self.params is None or self.integrator is None):
            raise ValueError("the splitting scheme needs params and an integrator")
        if self.kind == NV and self.integrator is None:
            raise ValueError("the N-V scheme needs an integrator")

    def step_dimension(self, model: SDEModel) -> int:
        d = model.brownian_dim
        return {NN: 2 * d, EM: d, NV: 1 + d}[self.kind]

    def uniform_dimension(self, model: SDEModel) -> int:
        """Uniform variates consumed per full path: 2dn (NN), dn (EM), n+dn (NV)."""
        return self.partitions * self.step_dimension(model)


# ---------------------------------------------------------------------------
# One-step maps
# ---------------------------------------------------------------------------


def nn_step(model: SDEModel, params: SchemeParams, rk: IntegrationScheme, x: np.ndarray,
            s: float, gaussians: np.ndarray, step_index: int | None = None) -> np.ndarray:
    """One splitting step: the flow of W_2 applied first, then the flow of W_1.

    gaussians has shape (..., d, 2) holding the correlated pair (S^i_1, S^i_2)
    for each Brownian index i; W_j(y) = s c_j V0(y) + sqrt(s) sum_i S^i_j V_i(y).
    Each flow is the integrator's one-shot time-1 map.
    """
    x = np.asarray(x, dtype=float)
    gaussians = np.asarray(gaussians, dtype=float)
    if gaussians.shape[-2:] != (model.brownian_dim, 2):
        raise ValueError(f"gaussians must end in shape (d, 2), got {gaussians.shape}")
    root_s = np.sqrt(s)
    c = (float(params.c1), float(params.c2))
    for j in (1, 0):  # Z_2's flow first, then Z_1's
        coeffs = [s * c[j]] + [root_s * gaussians[..., i, j]
                               for i in range(model.brownian_dim)]
        w = lambda y, coeffs=coeffs: model.combination(y, coeffs)
        x = integrate(rk, w, x, step_index=step_index)
    return x


def em_step(model: SDEModel, x: np.ndarray, s: float, increments: np.ndarray) -> np.ndarray:
    """Euler-Maruyama: x + drift(x) s + sum_i V_i(x) dB^i, increments ~ N(0, s)."""
    x = np.asarray(x, dtype=float)
    increments = np.asarray(increments, dtype=float)
    out = x + s * model.ito_drift(x)
    for i in range(model.brownian_dim):
        dbi = increments[..., i]
        if isinstance(dbi, np.ndarray) and dbi.ndim == x.ndim - 1:
            dbi = dbi[..., None]
        out = out + dbi * model.stratonovich[i + 1](x)
    return out


def nv_step(model: SDEModel, rk: IntegrationScheme, x: np.ndarray, s: float,
            bernoulli: np.ndarray, etas: np.ndarray,
            step_index: int | None = None) -> np.ndarray:
    """One N-V step: half drift, the d Gaussian flows, half drift.

    The middle flows run in ascending Brownian order when the Bernoulli draw
    is +1 and descending when -1.  This competitor is a reconstruction of the
    well-known splitting method it is benchmarked against, included for
    comparison parity and excluded from exactness claims (see README).
    """
    x = np.asarray(x, dtype=float)
    bernoulli = np.asarray(bernoulli)
    etas = np.asarray(etas, dtype=float)
    root_s = np.sqrt(s)
    d = model.brownian_dim

    def drift_half(y):
        coeffs = [0.5 * s] + [0.0] * d
        return integrate(rk, lambda z: model.combination(z, coeffs), y,
                         step_index=step_index)

    def brownian_flow(y, i, eta):
        coeffs = [0.0] * (d + 1)
        coeffs[i] = root_s * eta
        return integrate(rk, lambda z: model.combination(z, coeffs), y,
                         step_index=step_index)

    x = drift_half(x)
    if bernoulli.ndim == 0:
        order = range(1, d + 1) if bernoulli >= 0 else range(d, 0, -1)
        for i in order:
            x = brownian_flow(x, i, etas[..., i - 1])
    else:
        asc = bernoulli >= 0
        for sel, order in ((asc, range(1, d + 1)), (~asc, range(d, 0, -1))):
            if not np.any(sel):
                continue
            sub = x[sel]
            for i in order:
                sub = brownian_flow(sub, i, etas[sel, i - 1])
            x = x.copy()
            x[sel] = sub
    return drift_half(x)


# ---------------------------------------------------------------------------
# Path drivers
# ---------------------------------------------------------------------------


def run_paths(plan: SchemeStepPlan, model: SDEModel, x0: Sequence[float], T: float,
              uniforms: np.ndarray) -> np.ndarray:
    """Drive a batch of paths to time T from a (P, dims) uniform block.

    Uniforms are consumed step-major; within a step, Brownian-index major,
    with the factor index j = 1, 2 innermost (splitting scheme), or the
    Bernoulli variate first (N-V).  Identical blocks give identical outputs.
    """
    uniforms = np.atleast_2d(np.asarray(uniforms, dtype=float))
    paths = uniforms.shape[0]
    want = plan.uniform_dimension(model)
    if uniforms.shape[1] != want:
        raise ValueError(
            f"{plan.kind} with n={plan.partitions}, d={model.brownian_dim} needs "
            f"{want} uniforms per path, got {uniforms.shape[1]}"
        )
    n = plan.partitions
    s = T / n
    d = model.brownian_dim
    per = plan.step_dimension(model)
    x = np.broadcast_to(np.asarray(x0, dtype=float), (paths, model.dim)).copy()

    for k in range(n):
        block = uniforms[:, k * per:(k + 1) * per]
        if plan.kind == NN:
            z = inv_normal_cdf(block).reshape(paths, d, 2)
            gaussians = correlate_pair(z, plan.params.covariance)
            x = nn_step(model, plan.params, plan.integrator, x, s, gaussians, step_index=k)
        elif plan.kind == EM:
            increments = np.sqrt(s) * inv_normal_cdf(block)
            x = em_step(model, x, s, increments)
        else:
            bern = np.where(block[:, 0] >= 0.5, 1.0, -1.0)
            etas = inv_normal_cdf(block[:, 1:])
            x = nv_step(model, plan.integrator, x, s, bern, etas, step_index=k)
    return x


def run_path(plan: SchemeStepPlan, model: SDEModel, x0: Sequence[float], T: float,
             uniforms: np.ndarray) -> np.ndarray:
    """Single-path variant of :func:`run_paths`; uniforms has shape (dims,)."""
    uniforms = np.asarray(uniforms, dtype=float)
    if uniforms.ndim != 1:
        raise ValueError("run_path expects a flat uniform vector")
    return run_paths(plan, model, x0, T, uniforms[None, :])[0]


def romberg(estimate_n: float, estimate_2n: float, p: int) -> float:
    """Cancel the leading 1/n^p error term of a weak order-p scheme.

    (2^p estimate_2n - estimate_n) / (2^p - 1).
    """
    if p < 1:
        raise ValueError("extrapolation order p must be >= 1")
    w = 2.0**p
    return (w * estimate_2n - estimate_n) / (w - 1.0)
