"""Rooted-tree combinatorics and exact Runge-Kutta order conditions.

Non-labelled rooted trees are kept in a canonical form (children sorted under
a total order), so structural equality is tree isomorphism.  The labelling
count alpha, the symmetry factor sigma, and the stage derivative weights
zeta_i are combined into the classical order conditions, checked in exact
rational arithmetic so that certification is an equality test.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from pathlib import Path
from typing import Iterable


class Tree:
    """A non-labelled rooted tree; children stored sorted, so equality = isomorphism."""

    __slots__ = ("children", "order", "_key", "_hash")

    def __init__(self, children: Iterable["Tree"] = ()):
        kids = tuple(sorted(children, key=lambda t: t._key))
        object.__setattr__(self, "children", kids)
        object.__setattr__(self, "order", 1 + sum(c.order for c in kids))
        object.__setattr__(self, "_key", (self.order, tuple(c._key for c in kids)))
        object.__setattr__(self, "_hash", hash(self._key))

    def __setattr__(self, *_):
        raise AttributeError("Tree is immutable")

    def __eq__(self, other) -> bool:
        return isinstance(other, Tree) and self._key == other._key

    def __lt__(self, other: "Tree") -> bool:
        return self._key < other._key

    def __hash__(self) -> int:
        return self._hash

    def __str__(self) -> str:
        if not self.children:
            return "t"
        return "[" + "".join(str(c) for c in self.children) + "]"

    def __repr__(self) -> str:
        return f"Tree<{self}>"


TAU = Tree()


@lru_cache(maxsize=None)
def trees_of_order(m: int) -> tuple[Tree, ...]:
    """All non-labelled rooted trees with exactly m vertices, canonically ordered."""
    if m < 1:
        raise ValueError("order must be >= 1")
    if m == 1:
        return (TAU,)
    pool: list[Tree] = []
    for k in range(1, m):
        pool.extend(trees_of_order(k))

    found: list[Tree] = []

    def extend(budget: int, start: int, chosen: list[Tree]) -> None:
        if budget == 0:
            found.append(Tree(chosen))
            return
        for i in range(start, len(pool)):
            c = pool[i]
            if c.order > budget:
                continue
            chosen.append(c)
            extend(budget - c.order, i, chosen)
            chosen.pop()

    extend(m - 1, 0, [])
    return tuple(sorted(set(found), key=lambda t: t._key))


def enumerate_trees(max_order: int) -> list[tuple[Tree, ...]]:
    """Trees grouped by order 1..max_order; one representative per isomorphism class."""
    if max_order < 1:
        raise ValueError("max_order must be >= 1")
    return [trees_of_order(m) for m in range(1, max_order + 1)]


def trees_up_to(max_order: int) -> list[Tree]:
    return [t for group in enumerate_trees(max_order) for t in group]


@lru_cache(maxsize=None)
def sigma(t: Tree) -> int:
    """Symmetry factor: product over distinct children of m! sigma(child)^m."""
    out = 1
    i = 0
    kids = t.children
    while i < len(kids):
        j = i
        while j < len(kids) and kids[j] == kids[i]:
            j += 1
        out *= math.factorial(j - i) * sigma(kids[i]) ** (j - i)
        i = j
    return out


@lru_cache(maxsize=None)
def _density(t: Tree) -> int:
    """Product of subtree sizes (the tree density gamma)."""
    return t.order * math.prod(_density(c) for c in t.children)


def alpha(t: Tree) -> int:
    """Number of monotone labellings of t: r! / (sigma * gamma)."""
    num, den = math.factorial(t.order), sigma(t) * _density(t)
    assert num % den == 0, t
    return num // den


def r(t: Tree) -> int:
    """Vertex count."""
    return t.order


# ---------------------------------------------------------------------------
# Butcher tableaus
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ButcherTableau:
    """An explicit Runge-Kutta coefficient pair (A, b) with exact rational entries."""

    a: tuple[tuple[Fraction, ...], ...]
    b: tuple[Fraction, ...]
    declared_order: int
    name: str = ""

    def __post_init__(self):
        a = tuple(tuple(Fraction(x) for x in row) for row in self.a)
        b = tuple(Fraction(x) for x in self.b)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        k = len(b)
        if len(a) != k or any(len(row) != k for row in a):
            raise ValueError("A must be KxK with K = len(b)")
        for i in range(k):
            for j in range(i, k):
                if a[i][j] != 0:
                    raise ValueError(f"not explicit: a[{i + 1}][{j + 1}] != 0")

    @property
    def stages(self) -> int:
        return len(self.b)

    @classmethod
    def from_mapping(cls, data: dict) -> "ButcherTableau":
        """Build from a JSON-style dict with rational strings such as "11/64"."""
        a = tuple(tuple(Fraction(str(x)) for x in row) for row in data["a"])
        b = tuple(Fraction(str(x)) for x in data["b"])
        return cls(a=a, b=b, declared_order=int(data["order"]), name=data.get("name", ""))

    @classmethod
    def from_json_file(cls, path: str | Path) -> "ButcherTableau":
        with open(path, encoding="utf-8") as fh:
            return cls.from_mapping(json.load(fh))


@lru_cache(maxsize=None)
def elementary_weight(t: Tree, tableau: ButcherTableau) -> tuple[Fraction, ...]:
    """The derivative weights zeta_i(t; A), one per stage.

    zeta_i(tau) = sum_j a_ij; zeta_i([t_1..t_l]) = sum_j a_ij prod_k zeta_j(t_k).
    """
    K = tableau.stages
    A = tableau.a
    if not t.children:
        return tuple(sum(A[i][j] for j in range(K)) for i in range(K))
    child_weights = [elementary_weight(c, tableau) for c in t.children]
    out = []
    for i in range(K):
        acc = Fraction(0)
        for j in range(K):
            if A[i][j] == 0:
                continue
            prod = Fraction(1)
            for cw in child_weights:
                prod *= cw[j]
            acc += A[i][j] * prod
        out.append(acc)
    return tuple(out)


@dataclass(frozen=True)
class OrderCondition:
    """One order condition alpha(t)/r(t)! = (sum_i b_i prod_k zeta_i(t_k)) / sigma(t)."""

    tree: Tree
    lhs: Fraction
    rhs: Fraction

    @property
    def passed(self) -> bool:
        return self.lhs == self.rhs


def check_order(tableau: ButcherTableau, m: int) -> list[OrderCondition]:
    """Evaluate every order condition for trees with at most m vertices.

    For t = [t_1 ... t_l] the right side uses the children's weights at the
    summation stage; the empty product for tau reduces to sum_i b_i = 1.
    """
    reports = []
    for t in trees_up_to(m):
        child_weights = [elementary_weight(c, tableau) for c in t.children]
        rhs = Fraction(0)
        for i in range(tableau.stages):
            prod = tableau.b[i]
            for cw in child_weights:
                prod *= cw[i]
            rhs += prod
        reports.append(OrderCondition(
            tree=t,
            lhs=Fraction(alpha(t), math.factorial(t.order)),
            rhs=rhs / sigma(t),
        ))
    return reports


def has_order(tableau: ButcherTableau, m: int) -> bool:
    return all(c.passed for c in check_order(tableau, m))
