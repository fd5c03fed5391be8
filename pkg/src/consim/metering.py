"""Bit-exact message sizing and run-level accounting of the complexity
measures: TC, MC, BC, bMC, bBC and per-node storage.

All accounting is in bits internally; reports are in bytes with per-message
rounding (ceil(bits/8) per message). Directional headers carry sender and
receiver UIDs, broadcast headers carry the sender UID only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

PayloadFn = Callable[[Any, "SizingModel"], int]


class MeterError(KeyError):
    """Message kind not registered in the sizing model."""


@dataclass(frozen=True)
class KindSpec:
    payload_bits: PayloadFn
    phase: str = "main"


# Generic kinds usable by any protocol.
BASE_KINDS: dict[str, KindSpec] = {
    "ack": KindSpec(lambda payload, model: 0),
}


@dataclass(frozen=True)
class SizingModel:
    """Field-width formulas for one run: n nodes, b-bit values, p fractional
    bits for fixed-point payloads."""

    n: int
    value_bits: int
    fractional_bits: int = 0
    kinds: Mapping[str, KindSpec] = field(default_factory=dict)

    @property
    def uid_bits(self) -> int:
        return max(1, (self.n - 1).bit_length()) if self.n > 1 else 0

    @property
    def level_bits(self) -> int:
        if self.n < 2:
            return 1
        return max(1, math.ceil(math.log2(math.log2(self.n) + 1)))

    @property
    def weight_bits(self) -> int:
        # Fragment identifiers and edge weights priced as one UID pair.
        return 2 * self.uid_bits

    @property
    def header_directional_bits(self) -> int:
        return 2 * self.uid_bits

    @property
    def header_broadcast_bits(self) -> int:
        return self.uid_bits

    @property
    def fixed_value_bits(self) -> int:
        return self.value_bits + self.fractional_bits

    def with_kinds(self, *registries: Mapping[str, KindSpec]) -> "SizingModel":
        merged = dict(BASE_KINDS)
        merged.update(self.kinds)
        for reg in registries:
            merged.update(reg)
        return SizingModel(self.n, self.value_bits, self.fractional_bits, merged)

    def payload_bits(self, kind: str, payload: Any) -> int:
        try:
            spec = self.kinds[kind]
        except KeyError:
            raise MeterError(f"message kind {kind!r} not registered") from None
        return spec.payload_bits(payload, self)

    def phase_of(self, kind: str) -> str:
        try:
            return self.kinds[kind].phase
        except KeyError:
            raise MeterError(f"message kind {kind!r} not registered") from None

    def size_bits(self, kind: str, payload: Any, broadcast: bool) -> int:
        header = self.header_broadcast_bits if broadcast else self.header_directional_bits
        return header + self.payload_bits(kind, payload)


def size_of(message, model: SizingModel) -> int:
    """Total size in bits of one message under the model's formulas."""
    return model.size_bits(message.kind, message.payload, message.receiver is None)


def message_bytes(bits: int) -> int:
    return (bits + 7) // 8


@dataclass
class PhaseCounters:
    mc: int = 0
    bc_bytes: int = 0
    bmc: int = 0
    bbc_bytes: int = 0

    def as_dict(self) -> dict[str, int]:
        return {"mc": self.mc, "bc": self.bc_bytes, "bmc": self.bmc, "bbc": self.bbc_bytes}


@dataclass
class ComplexityReport:
    """All six complexity measures for one run, in paper units.

    tc is completion time divided by (l+d); mc/bc count directional traffic,
    bmc/bbc broadcast traffic; bytes use per-message ceil(bits/8). storage is
    the peak serialized node state; storage_core excludes per-edge fields
    (the bounded-degree figure Table-style storage rows assume).
    """

    tc: float
    mc: int
    bc: int
    bmc: int
    bbc: int
    storage: int
    storage_core: int
    completed: bool
    rounds: int | None = None
    phases: dict[str, dict[str, int]] = field(default_factory=dict)
    notes: tuple[str, ...] = ()

    FIELDS = ("tc", "mc", "bc", "bmc", "bbc", "storage", "storage_core", "completed")

    def as_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {k: getattr(self, k) for k in self.FIELDS}
        out["rounds"] = self.rounds
        for phase in sorted(self.phases):
            for key, val in sorted(self.phases[phase].items()):
                out[f"{phase}_{key}"] = val
        return out


def account(trace, model: SizingModel) -> ComplexityReport:
    """Sum counters over all sends up to the last decision time.

    Pure function of the trace: recomputation yields an identical report.
    Incomplete traces are accounted up to their last event and flagged.
    """
    completed = trace.completed and len(trace.decisions) == trace.n
    if completed and trace.decisions:
        horizon = max(t for _, t, _ in trace.decisions.values())
    else:
        horizon = trace.sim_time
    phases: dict[str, PhaseCounters] = {}
    mc = bc = bmc = bbc = 0
    if trace.meter_agg is not None:
        for (broadcast, phase), (count, nbytes) in trace.meter_agg.items():
            ctr = phases.setdefault(phase, PhaseCounters())
            if broadcast:
                bmc += count
                bbc += nbytes
                ctr.bmc += count
                ctr.bbc_bytes += nbytes
            else:
                mc += count
                bc += nbytes
                ctr.mc += count
                ctr.bc_bytes += nbytes
    for send_time, bits, broadcast, phase in trace.meter:
        if send_time > horizon:
            continue
        ctr = phases.get(phase)
        if ctr is None:
            ctr = phases[phase] = PhaseCounters()
        nbytes = message_bytes(bits)
        if broadcast:
            bmc += 1
            bbc += nbytes
            ctr.bmc += 1
            ctr.bbc_bytes += nbytes
        else:
            mc += 1
            bc += nbytes
            ctr.mc += 1
            ctr.bc_bytes += nbytes
    unit = trace.timing.l + trace.timing.d
    rounds = None
    if completed and trace.decisions:
        rounds = max(r for _, _, r in trace.decisions.values() if r is not None)
    return ComplexityReport(
        tc=horizon / unit,
        mc=mc,
        bc=bc,
        bmc=bmc,
        bbc=bbc,
        storage=message_bytes(trace.storage_peak_bits),
        storage_core=message_bytes(trace.storage_core_peak_bits),
        completed=completed,
        rounds=rounds,
        phases={k: v.as_dict() for k, v in sorted(phases.items())},
        notes=tuple(trace.notes),
    )


def storage_of(handlers, state, model: SizingModel) -> int:
    """Serialized size in bits of one automaton state under the model."""
    total, _core = handlers.state_bits(state, model)
    return total
