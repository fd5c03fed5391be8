"""Flooding consensus: every timer tick each node retransmits its initial
value and everything it has heard so far; a node decides once it knows all
n values.

A node halts transmission after it has decided, has sent its (now complete)
known-set to every neighbor it has seen, and has seen a complete known-set
from each of them; completeness of a neighbor's set doubles as its decided
flag, so no extra bit is carried. The same automaton runs on static graphs
and on edge schedules (per-slot neighbor sets).
"""

from __future__ import annotations

from typing import Any

from ..functions import ConsensusSpec
from ..graphs import EdgeSchedule, StaticGraph
from ..metering import KindSpec, SizingModel
from ..runtime import Automaton, Ctx, Handlers, Message

KINDS = {
    "flood": KindSpec(
        lambda payload, model: len(payload) * (model.uid_bits + model.value_bits),
        "main",
    ),
}


class FloodState:
    __slots__ = (
        "node", "n", "spec", "comm", "period",
        "known", "snapshot", "dirty", "decided",
        "nbr_full", "last_from", "seen", "final_sent", "ticks",
    )

    def __init__(self, node: int, n: int, x_i: Any, spec: ConsensusSpec,
                 comm: str, period: int):
        self.node = node
        self.n = n
        self.spec = spec
        self.comm = comm
        self.period = period
        self.known: dict[int, Any] = {node: x_i}
        self.snapshot: dict[int, Any] | None = None
        self.dirty = True
        self.decided = None
        self.nbr_full: set[int] = set()
        self.last_from: dict[int, Any] = {}
        self.seen: set[int] = set()
        self.final_sent: set[int] = set()
        self.ticks = 0


def _maybe_decide(state: FloodState):
    if state.decided is None and len(state.known) == state.n:
        x = [state.known[i] for i in range(1, state.n + 1)]
        state.decided = state.spec.evaluate(x)
        return state.decided
    return None


def _init(state: FloodState, ctx: Ctx):
    if state.n == 1:
        return ([], _maybe_decide(state), False)
    return ([], None, True)


def _on_timer(state: FloodState, ctx: Ctx):
    state.seen.update(ctx.neighbors)
    state.ticks += 1
    decision = _maybe_decide(state)
    if (
        state.decided is not None
        and state.ticks > state.period
        and state.seen <= state.nbr_full
        and state.seen <= state.final_sent
    ):
        return ([], decision, False)
    if state.dirty:
        state.snapshot = dict(state.known)
        state.dirty = False
    if state.decided is not None:
        state.final_sent.update(ctx.neighbors)
    if state.comm == "broadcast":
        sends = [(None, "flood", state.snapshot)]
    else:
        sends = [(v, "flood", state.snapshot) for v in ctx.neighbors]
    return (sends, decision, True)


def _on_message(state: FloodState, msg: Message, ctx: Ctx):
    incoming = msg.payload
    if state.last_from.get(msg.sender) is incoming:
        return ([], None, None)
    state.last_from[msg.sender] = incoming
    if len(incoming) == state.n:
        state.nbr_full.add(msg.sender)
    if len(incoming) > len(state.known) or not incoming.keys() <= state.known.keys():
        state.known.update(incoming)
        state.dirty = True
    return ([], _maybe_decide(state), None)


def _state_bits(state: FloodState, model: SizingModel) -> tuple[int, int]:
    core = (
        len(state.known) * (model.uid_bits + model.value_bits)
        + model.value_bits  # decision register
        + model.uid_bits    # network size n
        + 2                 # decided + dirty flags
    )
    per_edge = len(state.nbr_full) + len(state.final_sent)
    return core + per_edge, core


def _state_record(state: FloodState):
    return {
        "known": {str(k): ("v", v) for k, v in sorted(state.known.items())},
        "decided": ("v", state.decided) if state.decided is not None else None,
    }


def _payload_record(kind: str, payload) -> Any:
    return {str(k): ("v", v) for k, v in sorted(payload.items())}


HANDLERS = Handlers(
    init=_init,
    on_message=_on_message,
    on_timer=_on_timer,
    state_bits=_state_bits,
    state_record=_state_record,
    payload_record=_payload_record,
)


def flooding(
    spec: ConsensusSpec,
    graph_or_schedule: StaticGraph | EdgeSchedule,
    x: list,
    comm: str = "directional",
) -> dict[int, Automaton]:
    """Automaton family for flooding; works on static graphs and schedules."""
    if comm not in ("directional", "broadcast"):
        raise ValueError(f"unknown communication scheme {comm!r}")
    n = graph_or_schedule.n
    if len(x) != n:
        raise ValueError(f"need {n} initial values, got {len(x)}")
    period = graph_or_schedule.period if isinstance(graph_or_schedule, EdgeSchedule) else 1
    return {
        v: Automaton(v, FloodState(v, n, x[v - 1], spec, comm, period), HANDLERS)
        for v in range(1, n + 1)
    }


def flooding_dynamic(spec: ConsensusSpec, schedule: EdgeSchedule, x: list,
                     comm: str = "directional") -> dict[int, Automaton]:
    """Flooding over a D-connected schedule (per-slot neighbor sets)."""
    return flooding(spec, schedule, x, comm)
