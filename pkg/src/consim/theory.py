"""Constructive lower-bound apparatus: order equivalence of value vectors,
c-symmetric rings with exhaustively checked certificates, and the
comparison-based trace-substitution check.

A ring is c-symmetric when every segment of length l, for every integer l
with ceil(sqrt(n)) <= l <= n, has at least floor(c*n/l) order-equivalent
segments in the ring, itself included. The checker enumerates all of them;
the checker, not any particular construction, is the source of truth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Sequence


def order_equivalent(a: Sequence, b: Sequence) -> bool:
    """True iff the two equal-length vectors agree on every pairwise order
    relation: a[i] < a[j] exactly when b[i] < b[j]."""
    if len(a) != len(b):
        raise ValueError(f"length mismatch: {len(a)} vs {len(b)}")
    n = len(a)
    for i in range(n):
        ai, bi = a[i], b[i]
        for j in range(i + 1, n):
            if (ai < a[j]) != (bi < b[j]) or (a[j] < ai) != (b[j] < bi):
                return False
    return True


def rank_pattern(values: Sequence) -> tuple[int, ...]:
    """Dense ranks; equal iff the vectors are order-equivalent."""
    ordered = sorted(set(values))
    rank = {v: r for r, v in enumerate(ordered)}
    return tuple(rank[v] for v in values)


@dataclass(frozen=True)
class Segment:
    """l consecutive ring positions in clockwise order, wrapping modulo n."""

    start: int
    values: tuple

    @property
    def length(self) -> int:
        return len(self.values)


def segment(ring: Sequence, start: int, length: int) -> Segment:
    n = len(ring)
    if not 1 <= length <= n:
        raise ValueError(f"segment length must be in 1..{n}, got {length}")
    return Segment(start, tuple(ring[(start + k) % n] for k in range(length)))


def bit_reversal_ring(n: int) -> list[int]:
    """Position i carries the bit-reversal of i in log2(n) bits."""
    if n < 2 or n & (n - 1):
        raise ValueError(f"n must be a power of two >= 2, got {n}")
    k = n.bit_length() - 1
    return [int(format(i, f"0{k}b")[::-1], 2) for i in range(n)]


@dataclass
class CSymmetryCertificate:
    """Per-length class counts and minimum multiplicities; certifies iff
    every segment meets the floor(c*n/l) multiplicity requirement."""

    n: int
    c: float
    certified: bool
    lengths: dict[int, dict[str, int]] = field(default_factory=dict)
    witness: dict[str, Any] | None = None

    def as_record(self) -> dict:
        rec = {
            "n": self.n,
            "c": self.c,
            "certified": self.certified,
            "lengths": {
                str(l): dict(sorted(v.items())) for l, v in sorted(self.lengths.items())
            },
        }
        if self.witness is not None:
            rec["witness"] = self.witness
        return rec


def checked_lengths(n: int) -> range:
    return range(math.ceil(math.sqrt(n)), n + 1)


def is_c_symmetric(ring: Sequence, c: float) -> CSymmetryCertificate:
    """Exhaustive check over every length in [ceil(sqrt n), n] and all n
    segments per length; a refutation names the violating segment."""
    n = len(ring)
    if n < 4:
        raise ValueError(f"ring too small to check, n={n}")
    if c <= 0:
        raise ValueError(f"c must be positive, got {c}")
    cert = CSymmetryCertificate(n=n, c=c, certified=True)
    for l in checked_lengths(n):
        required = math.floor(c * n / l)
        classes: dict[tuple, list[int]] = {}
        for s in range(n):
            key = rank_pattern(segment(ring, s, l).values)
            classes.setdefault(key, []).append(s)
        min_mult = min(len(v) for v in classes.values())
        cert.lengths[l] = {
            "classes": len(classes),
            "min_multiplicity": min_mult,
            "required": required,
        }
        if min_mult < required:
            starts = min(v for v in classes.values() if len(v) == min_mult)
            seg = segment(ring, starts[0], l)
            cert.certified = False
            cert.witness = {
                "length": l,
                "start": seg.start,
                "values": list(seg.values),
                "multiplicity": min_mult,
                "required": required,
            }
            return cert
    return cert


# ---------------------------------------------------------------------------
# Comparison-based trace equivalence
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TraceMatch:
    ok: bool
    divergence: str | None = None

    def __bool__(self) -> bool:
        return self.ok


def _substitute(obj: Any, mapping: dict) -> Any:
    """Rewrite every tagged consensus value ("v", x) via the rank mapping;
    everything else (UIDs, levels, times) passes through untouched."""
    if isinstance(obj, tuple):
        if len(obj) == 2 and obj[0] == "v":
            return ("v", mapping.get(obj[1], obj[1]))
        return tuple(_substitute(v, mapping) for v in obj)
    if isinstance(obj, list):
        if len(obj) == 2 and obj[0] == "v":
            return ["v", mapping.get(obj[1], obj[1])]
        return [_substitute(v, mapping) for v in obj]
    if isinstance(obj, dict):
        return {k: _substitute(v, mapping) for k, v in obj.items()}
    return obj


def traces_order_equivalent(t1, t2, x1: Sequence, x2: Sequence) -> TraceMatch:
    """True iff t2 equals t1 after substituting each initial value of x1 by
    the value of corresponding rank in x2, uniformly across states, messages,
    and decisions. Traces must come from runs that differ only in initial
    values (same graph, policy, seed, record='full')."""
    if rank_pattern(x1) != rank_pattern(x2):
        return TraceMatch(False, "inputs are not order-equivalent")
    mapping = dict(zip(sorted(set(x1)), sorted(set(x2))))
    if len(t1.events) != len(t2.events):
        return TraceMatch(
            False, f"event counts differ: {len(t1.events)} vs {len(t2.events)}")
    for i, (e1, e2) in enumerate(zip(t1.events, t2.events)):
        if _substitute(e1, mapping) != e2:
            return TraceMatch(False, f"event {i}: {e1!r} vs {e2!r}")
    d1 = {v: ("v", val) for v, (val, _, _) in t1.decisions.items()}
    d2 = {v: ("v", val) for v, (val, _, _) in t2.decisions.items()}
    if _substitute(d1, mapping) != d2:
        return TraceMatch(False, "decisions differ after substitution")
    return TraceMatch(True)
