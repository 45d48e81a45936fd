"""Explicit Runge-Kutta stepping for autonomous vector fields.

An integration scheme wraps a certified tableau and integrates a field W to
time 1 (the step size is folded into the field by the caller, matching the
rescaling convention of the splitting construction).  The appendix tableaus
of order 5 (6 stages) and order 7 (9 stages) are built in.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Callable

import numpy as np

from .rk_trees import ButcherTableau, has_order


class IntegrationFailure(RuntimeError):
    """A non-finite state appeared during stage evaluation."""

    def __init__(self, stage: int, step: int | None = None):
        self.stage = stage
        self.step = step
        where = f"stage {stage}" + (f", step {step}" if step is not None else "")
        super().__init__(f"non-finite state during Runge-Kutta {where}")


@dataclass(frozen=True)
class VectorField:
    """An autonomous field on R^N; func maps (..., N) state arrays to (..., N)."""

    dimension: int
    func: Callable[[np.ndarray], np.ndarray]

    def __call__(self, y: np.ndarray) -> np.ndarray:
        return self.func(y)


def _f(x: str) -> Fraction:
    return Fraction(x)


_RK5_BUTCHER = ButcherTableau(
    name="rk5-butcher",
    declared_order=5,
    a=(
        (0, 0, 0, 0, 0, 0),
        (_f("2/5"), 0, 0, 0, 0, 0),
        (_f("11/64"), _f("5/64"), 0, 0, 0, 0),
        (0, 0, _f("1/2"), 0, 0, 0),
        (_f("3/64"), _f("-15/64"), _f("3/8"), _f("9/16"), 0, 0),
        (0, _f("5/7"), _f("6/7"), _f("-12/7"), _f("8/7"), 0),
    ),
    b=(_f("7/90"), 0, _f("32/90"), _f("12/90"), _f("32/90"), _f("7/90")),
)

_RK7_BUTCHER = ButcherTableau(
    name="rk7-butcher",
    declared_order=7,
    a=(
        (0, 0, 0, 0, 0, 0, 0, 0, 0),
        (_f("1/6"), 0, 0, 0, 0, 0, 0, 0, 0),
        (0, _f("1/3"), 0, 0, 0, 0, 0, 0, 0),
        (_f("1/8"), 0, _f("3/8"), 0, 0, 0, 0, 0, 0),
        (_f("148/1331"), 0, _f("150/1331"), _f("-56/1331"), 0, 0, 0, 0, 0),
        (_f("-404/243"), 0, _f("-170/27"), _f("4024/1701"), _f("10648/1701"), 0, 0, 0, 0),
        (_f("2466/2401"), 0, _f("1242/343"), _f("-19176/16807"), _f("-51909/16807"),
         _f("1053/2401"), 0, 0, 0),
        (_f("5/154"), 0, 0, _f("96/539"), _f("-1815/20384"), _f("-405/2464"),
         _f("49/1144"), 0, 0),
        (_f("-113/32"), 0, _f("-195/22"), _f("32/7"), _f("29403/3584"), _f("-729/512"),
         _f("1029/1408"), _f("21/16"), 0),
    ),
    b=(0, 0, 0, _f("32/105"), _f("1771561/6289920"), _f("243/2560"), _f("16807/74880"),
       _f("77/1440"), _f("11/270")),
)

_BUILTINS = {t.name: t for t in (_RK5_BUTCHER, _RK7_BUTCHER)}


def builtin_tableau(name: str) -> ButcherTableau:
    """The appendix tableaus by name: "rk5-butcher" or "rk7-butcher"."""
    try:
        return _BUILTINS[name]
    except KeyError:
        raise KeyError(f"unknown tableau {name!r}; builtins: {sorted(_BUILTINS)}") from None


@lru_cache(maxsize=None)
def _certify(tableau: ButcherTableau, order: int) -> bool:
    return has_order(tableau, order)


@dataclass(frozen=True)
class IntegrationScheme:
    """A tableau certified (at construction) to satisfy its order conditions."""

    tableau: ButcherTableau
    order: int
    # float views of (A, b), precomputed with the nonzero structure
    _rows: tuple = field(init=False, repr=False, compare=False)
    _weights: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not _certify(self.tableau, self.order):
            raise ValueError(
                f"tableau {self.tableau.name or '<anonymous>'} fails order-{self.order} conditions"
            )
        rows = tuple(
            tuple((j, float(aij)) for j, aij in enumerate(row) if aij != 0)
            for row in self.tableau.a
        )
        weights = tuple((i, float(bi)) for i, bi in enumerate(self.tableau.b) if bi != 0)
        object.__setattr__(self, "_rows", rows)
        object.__setattr__(self, "_weights", weights)

    @property
    def stages(self) -> int:
        return self.tableau.stages


def scheme(name: str) -> IntegrationScheme:
    t = builtin_tableau(name)
    return IntegrationScheme(t, t.declared_order)


def rk_step(integ: IntegrationScheme, W, y0: np.ndarray, s: float,
            check: bool = True, step_index: int | None = None) -> np.ndarray:
    """One explicit step Y(y0; W, s) = y0 + s sum_i b_i W(Y_i).

    y0 may be a single state (N,) or a batch (P, N); W must broadcast
    accordingly.  With check=True every stage is screened for non-finite
    values and failures carry the stage index.
    """
    y0 = np.asarray(y0, dtype=float)
    ks: list[np.ndarray] = []
    for i, row in enumerate(integ._rows):
        yi = y0
        for j, aij in row:
            yi = yi + (s * aij) * ks[j]
        ki = np.asarray(W(yi), dtype=float)
        if check and not np.all(np.isfinite(ki)):
            raise IntegrationFailure(stage=i + 1, step=step_index)
        ks.append(ki)
    out = y0
    for i, bi in integ._weights:
        out = out + (s * bi) * ks[i]
    return out


def integrate(integ: IntegrationScheme, W, y0: np.ndarray, substeps: int = 1,
              check: bool = True, step_index: int | None = None) -> np.ndarray:
    """The time-1 flow approximation g(W)(y0), optionally split into substeps.

    A single step is the scheme's defining form (the one-step error bound is
    exactly what the splitting construction consumes); substeps > 1 exists for
    diagnostics only.
    """
    if substeps < 1:
        raise ValueError("substeps must be >= 1")
    y = y0
    h = 1.0 / substeps
    for _ in range(substeps):
        y = rk_step(integ, W, y, h, check=check, step_index=step_index)
    return y


DEFAULT_SCHEME_NAME = "rk5-butcher"
