"""Consensus functions with their taxonomy flags and the lift/combine/finalize
interface used by tree aggregation.

Averaging-style functions run on fixed-point integers (p fractional bits) so
that fold results are independent of combination order bit for bit, and so
byte accounting has a well-defined value width.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Sequence

DEFAULT_FRACTIONAL_BITS = 16


class UnsupportedFold(TypeError):
    """fold() called on a spec without a hierarchical decomposition."""


def round_div(num: int, den: int) -> int:
    """Nearest-integer division, ties away from zero; round_div(-a,b) == -round_div(a,b)."""
    if den <= 0:
        raise ValueError(f"denominator must be positive, got {den}")
    if num >= 0:
        return (2 * num + den) // (2 * den)
    return -((-2 * num + den) // (2 * den))


def to_fixed(x: float | int, p: int) -> int:
    return round(x * (1 << p))


def from_fixed(raw: int, p: int) -> float:
    return raw / (1 << p)


@dataclass(frozen=True)
class ConsensusSpec:
    """A consensus function f: X^n -> codomain plus its classification flags.

    For hierarchical specs, ``lift(i, x_i)`` maps one input to a partial
    aggregate, ``combine`` is the commutative associative operator, and
    ``finalize`` maps the folded aggregate to the codomain. ``evaluate`` is
    definitionally finalize(fold(lifts)) in node order, so any-order folds
    agree with it exactly.
    """

    name: str
    codomain: str
    n: int
    value_bits: int
    locally_sensitive: bool
    extractive: bool
    hierarchical: bool
    lift: Callable[[int, Any], Any] | None = None
    combine: Callable[[Any, Any], Any] | None = None
    finalize: Callable[[Any], Any] | None = None
    evaluate_fn: Callable[[Sequence[Any]], Any] | None = None
    aggregate_bits: int = 0
    fractional_bits: int = 0
    params: dict = field(default_factory=dict)

    def evaluate(self, x: Sequence[Any]) -> Any:
        if len(x) != self.n:
            raise ValueError(f"expected {self.n} values, got {len(x)}")
        if self.evaluate_fn is not None:
            return self.evaluate_fn(x)
        return self.finalize(self._fold_in_order(x, range(len(x))))

    def fold(self, x: Sequence[Any], order: Sequence[int] | None = None) -> Any:
        if not self.hierarchical:
            raise UnsupportedFold(f"{self.name} has no hierarchical decomposition")
        if order is None:
            order = range(len(x))
        return self.finalize(self._fold_in_order(x, order))

    def _fold_in_order(self, x: Sequence[Any], order: Sequence[int]) -> Any:
        acc = None
        for i in order:
            part = self.lift(i, x[i])
            acc = part if acc is None else self.combine(acc, part)
        if acc is None:
            raise ValueError("cannot fold an empty input vector")
        return acc

    def to_float(self, decision: Any) -> float:
        if self.fractional_bits:
            return from_fixed(decision, self.fractional_bits)
        return float(decision)


def evaluate(spec: ConsensusSpec, x: Sequence[Any]) -> Any:
    return spec.evaluate(x)


def fold(spec: ConsensusSpec, x: Sequence[Any], order: Sequence[int] | None = None) -> Any:
    return spec.fold(x, order)


def _uid_bits(n: int) -> int:
    return max(1, (n - 1).bit_length()) if n > 1 else 1


def builtin(
    name: str,
    n: int,
    value_bits: int = 16,
    weights: Sequence[float] | None = None,
    fractional_bits: int = DEFAULT_FRACTIONAL_BITS,
) -> ConsensusSpec:
    """Named consensus functions: MAX, MIN, LEADER, weighted-average,
    quadratic-argmin, majority.

    LEADER is max over UID-valued inputs. weighted-average computes c^T x
    (default c = (1/n)*1) and quadratic-argmin computes argmin_z sum (z-x_i)^2,
    i.e. the mean; both are fixed-point with ``fractional_bits`` of precision
    applied at lift time.
    """
    key = name.strip().lower().replace("_", "-")
    p = fractional_bits
    if key in ("max", "leader"):
        return ConsensusSpec(
            name=key.upper(),
            codomain="uid" if key == "leader" else "value",
            n=n,
            value_bits=value_bits if key == "max" else _uid_bits(n),
            locally_sensitive=False,
            extractive=True,
            hierarchical=True,
            lift=lambda i, v: v,
            combine=max,
            finalize=lambda a: a,
            aggregate_bits=value_bits if key == "max" else _uid_bits(n),
        )
    if key == "min":
        return ConsensusSpec(
            name="MIN",
            codomain="value",
            n=n,
            value_bits=value_bits,
            locally_sensitive=False,
            extractive=True,
            hierarchical=True,
            lift=lambda i, v: v,
            combine=min,
            finalize=lambda a: a,
            aggregate_bits=value_bits,
        )
    if key in ("weighted-average", "avg", "average"):
        c = [Fraction(w).limit_denominator(1 << 30) for w in weights] if weights else None
        if c is not None and len(c) != n:
            raise ValueError(f"weight vector has {len(c)} entries, expected {n}")

        def lift(i: int, v: int, _c=c, _n=n, _p=p):
            ci = _c[i] if _c is not None else Fraction(1, _n)
            return (round_div((v << _p) * ci.numerator, ci.denominator), 1)

        return ConsensusSpec(
            name="WEIGHTED-AVERAGE",
            codomain="fixed-point",
            n=n,
            value_bits=value_bits,
            locally_sensitive=True,
            extractive=False,
            hierarchical=True,
            lift=lift,
            combine=lambda a, b: (a[0] + b[0], a[1] + b[1]),
            finalize=lambda a: a[0],
            aggregate_bits=2 * (value_bits + _uid_bits(n)),
            fractional_bits=p,
            params={"weights": "uniform" if weights is None else "custom"},
        )
    if key in ("quadratic-argmin", "argmin", "mean"):
        return ConsensusSpec(
            name="QUADRATIC-ARGMIN",
            codomain="fixed-point",
            n=n,
            value_bits=value_bits,
            locally_sensitive=True,
            extractive=False,
            hierarchical=True,
            lift=lambda i, v, _p=p: (v << _p, 1),
            combine=lambda a, b: (a[0] + b[0], a[1] + b[1]),
            finalize=lambda a: round_div(a[0], a[1]),
            aggregate_bits=2 * (value_bits + _uid_bits(n)),
            fractional_bits=p,
        )
    if key in ("majority", "majority-vote"):
        count_bits = (n + 1).bit_length()
        return ConsensusSpec(
            name="MAJORITY",
            codomain="bit",
            n=n,
            value_bits=1,
            locally_sensitive=False,
            extractive=False,
            hierarchical=True,
            lift=lambda i, v: (int(v), 1),
            combine=lambda a, b: (a[0] + b[0], a[1] + b[1]),
            finalize=lambda a: 1 if 2 * a[0] > a[1] else 0,
            aggregate_bits=2 * count_bits,
        )
    raise KeyError(f"unknown consensus function {name!r}")


BUILTIN_NAMES = (
    "MAX",
    "MIN",
    "LEADER",
    "weighted-average",
    "quadratic-argmin",
    "majority",
)
