"""Execution engine for collections of per-node automata.

One simulation is one strictly sequential event loop, so identical inputs
and seeds yield byte-identical traces. Synchronous runs use a lock-step
round loop; asynchronous runs use a timed event heap with per-event delay
draws bounded by the (l, d) contract: transitions activate within l time
units, deliveries within d.
"""

from __future__ import annotations

import heapq
import json
import random
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Sequence

from .graphs import EdgeSchedule, StaticGraph
from .metering import SizingModel

BROADCAST = None  # receiver marker


@dataclass(frozen=True)
class TimingParams:
    """Non-blocking bounds: l on transition latency, d on delivery delay.
    (l+d) is the reported time unit."""

    l: float = 1.0
    d: float = 1.0

    def __post_init__(self):
        if self.l <= 0 or self.d <= 0:
            raise ValueError(f"timing bounds must be positive, got l={self.l}, d={self.d}")

    @property
    def unit(self) -> float:
        return self.l + self.d


@dataclass(frozen=True)
class SchedulerPolicy:
    """Scheduling mode plus the seed for all of its delay draws.

    heuristic applies to adversarial-async runs: "uniform" draws delays in
    (0,l] x (0,d], "last-sent-first" maximizes staleness (all delays at the
    bound, newest deliveries processed first), "edge-biased" keeps one seeded
    edge at delay d while all others run at d/100.
    """

    mode: str = "synchronous"
    seed: int = 0
    heuristic: str = "uniform"

    MODES = ("synchronous", "random-async", "adversarial-async")

    def __post_init__(self):
        if self.mode not in self.MODES:
            raise ValueError(f"unknown scheduler mode {self.mode!r}")

    def label(self) -> str:
        if self.mode == "adversarial-async":
            return f"{self.mode}:{self.heuristic}"
        return self.mode


class Message:
    __slots__ = ("sender", "receiver", "kind", "payload")

    def __init__(self, sender: int, receiver: int | None, kind: str, payload: Any):
        self.sender = sender
        self.receiver = receiver
        self.kind = kind
        self.payload = payload

    def __repr__(self):
        to = "*" if self.receiver is None else self.receiver
        return f"Message({self.sender}->{to} {self.kind})"


@dataclass(frozen=True)
class Handlers:
    """Deterministic transition functions of one protocol family.

    Each handler returns (sends, decision, active): sends is a list of
    (receiver-or-None, kind, payload) triples, decision is the node's output
    value (set at most once), and active requests (True) or cancels (False)
    the periodic timer; None leaves it unchanged.
    """

    init: Callable[[Any, "Ctx"], tuple]
    on_message: Callable[[Any, Message, "Ctx"], tuple]
    on_timer: Callable[[Any, "Ctx"], tuple]
    state_bits: Callable[[Any, SizingModel], tuple[int, int]]
    state_record: Callable[[Any], Any]
    payload_record: Callable[[str, Any], Any]


@dataclass
class Automaton:
    node: int
    state: Any
    handlers: Handlers


class Ctx:
    """What a transition may observe: the current neighbor set, simulated
    time, and the synchronous round / schedule slot index."""

    __slots__ = ("neighbors", "time", "round")

    def __init__(self, neighbors: tuple[int, ...], time: float, round: int | None):
        self.neighbors = neighbors
        self.time = time
        self.round = round


@dataclass
class ExecutionTrace:
    n: int
    timing: TimingParams
    policy: SchedulerPolicy
    record: str = "events"
    completed: bool = False
    sim_time: float = 0.0
    rounds: int | None = None
    decisions: dict[int, tuple[Any, float, int | None]] = field(default_factory=dict)
    meter: list[tuple[float, int, bool, str]] = field(default_factory=list)
    # Closed-form counter totals {(broadcast, phase): (count, bytes)} used by
    # batch kernels instead of per-send meter records.
    meter_agg: dict[tuple[bool, str], tuple[int, int]] | None = None
    events: list[tuple] = field(default_factory=list)
    storage_peak_bits: int = 0
    storage_core_peak_bits: int = 0
    notes: list[str] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def decision_values(self) -> dict[int, Any]:
        return {v: d[0] for v, d in self.decisions.items()}

    def completion_time(self) -> float:
        if not self.decisions:
            return self.sim_time
        return max(t for _, t, _ in self.decisions.values())


class NonTermination(RuntimeError):
    """Round cap exceeded, or the system quiesced before all nodes decided.
    Carries the partial trace."""

    def __init__(self, message: str, trace: ExecutionTrace):
        super().__init__(message)
        self.trace = trace


class DecisionChanged(RuntimeError):
    """A node emitted a second, different decision value."""


# ---------------------------------------------------------------------------
# Adversarial delay assignment
# ---------------------------------------------------------------------------


class DelayAssigner:
    """Per-event delay draws within (0, l] x (0, d]."""

    lifo = False

    def __init__(self, policy: SchedulerPolicy, timing: TimingParams,
                 edges: Sequence[tuple[int, int]] = ()):
        self.policy = policy
        self.timing = timing
        self.rng = random.Random(policy.seed)
        self.edges = tuple(edges)

    def delivery_delay(self, sender: int, receiver: int) -> float:
        raise NotImplementedError

    def transition_latency(self, node: int) -> float:
        raise NotImplementedError


class SynchronousDelays(DelayAssigner):
    """Degenerate assignment: every delay exactly at its bound."""

    def delivery_delay(self, sender, receiver):
        return self.timing.d

    def transition_latency(self, node):
        return self.timing.l


class UniformDelays(DelayAssigner):
    def delivery_delay(self, sender, receiver):
        return self.timing.d * (1.0 - self.rng.random())

    def transition_latency(self, node):
        return self.timing.l * (1.0 - self.rng.random())


class LastSentFirstDelays(DelayAssigner):
    """All delays maxed out; simultaneous deliveries handled newest first."""

    lifo = True

    def delivery_delay(self, sender, receiver):
        return self.timing.d

    def transition_latency(self, node):
        return self.timing.l


class EdgeBiasedDelays(DelayAssigner):
    """One seeded edge always at delay d, every other edge at d/100."""

    def __init__(self, policy, timing, edges=()):
        super().__init__(policy, timing, edges)
        self.slow = {self.rng.choice(sorted(self.edges))} if self.edges else set()

    def delivery_delay(self, sender, receiver):
        e = (sender, receiver) if sender < receiver else (receiver, sender)
        return self.timing.d if e in self.slow else self.timing.d / 100.0

    def transition_latency(self, node):
        return self.timing.l * (1.0 - self.rng.random())


_HEURISTICS = {
    "uniform": UniformDelays,
    "last-sent-first": LastSentFirstDelays,
    "edge-biased": EdgeBiasedDelays,
}


def make_assigner(policy: SchedulerPolicy, timing: TimingParams,
                  edges: Sequence[tuple[int, int]] = ()) -> DelayAssigner:
    if policy.mode == "synchronous":
        return SynchronousDelays(policy, timing, edges)
    if policy.mode == "random-async":
        return UniformDelays(policy, timing, edges)
    try:
        cls = _HEURISTICS[policy.heuristic]
    except KeyError:
        raise ValueError(f"unknown adversary heuristic {policy.heuristic!r}") from None
    return cls(policy, timing, edges)


def adversary_schedules(policy: SchedulerPolicy, timing: TimingParams,
                        count: int = 1,
                        edges: Sequence[tuple[int, int]] = ()) -> list[DelayAssigner]:
    """A seeded family of delay assignments approximating the sup over fair
    executions; reports flag this substitution."""
    if policy.mode == "synchronous":
        return [SynchronousDelays(policy, timing, edges)]
    out = []
    for k in range(count):
        p = SchedulerPolicy(policy.mode, policy.seed + k, policy.heuristic)
        out.append(make_assigner(p, timing, edges))
    return out


# ---------------------------------------------------------------------------
# Environment adapter: static graph or edge schedule
# ---------------------------------------------------------------------------


class _Env:
    def __init__(self, graph_or_schedule: StaticGraph | EdgeSchedule):
        self.raw = graph_or_schedule
        self.dynamic = isinstance(graph_or_schedule, EdgeSchedule)
        self.n = graph_or_schedule.n

    def neighbors(self, v: int, slot: int) -> tuple[int, ...]:
        if self.dynamic:
            return self.raw.neighbors(v, slot)
        return self.raw.neighbors(v)

    def edges(self) -> tuple[tuple[int, int], ...]:
        if self.dynamic:
            return self.raw.base_union().edges
        return self.raw.edges


# ---------------------------------------------------------------------------
# Run loops
# ---------------------------------------------------------------------------


def run(
    graph_or_schedule: StaticGraph | EdgeSchedule,
    automata: dict[int, Automaton],
    policy: SchedulerPolicy,
    timing: TimingParams,
    round_cap: int,
    model: SizingModel,
    record: str = "events",
) -> ExecutionTrace:
    """Execute until every node has decided and the system quiesces.

    Raises NonTermination (with the partial trace attached) if simulated time
    passes round_cap*(l+d) or the event queue drains with undecided nodes.
    """
    env = _Env(graph_or_schedule)
    if set(automata) != set(range(1, env.n + 1)):
        raise ValueError("need exactly one automaton per node 1..n")
    if round_cap < 1:
        raise ValueError(f"round_cap must be >= 1, got {round_cap}")
    trace = ExecutionTrace(n=env.n, timing=timing, policy=policy, record=record)
    trace.meta["mode"] = policy.label()
    if policy.mode != "synchronous":
        trace.notes.append("async-delays:seeded-adversary-family-not-exhaustive-sup")
    if policy.mode == "synchronous":
        _run_sync(env, automata, policy, timing, round_cap, model, record, trace)
    else:
        _run_async(env, automata, policy, timing, round_cap, model, record, trace)
    return trace


def run_synchronous(
    graph_or_schedule: StaticGraph | EdgeSchedule,
    automata: dict[int, Automaton],
    rounds: int,
    model: SizingModel,
    timing: TimingParams = TimingParams(),
    record: str = "events",
    seed: int = 0,
) -> ExecutionTrace:
    """Lock-step rounds: all sends of round k are delivered before any
    transition of round k+1."""
    policy = SchedulerPolicy("synchronous", seed)
    return run(graph_or_schedule, automata, policy, timing, rounds, model, record)


class _Loop:
    """Shared bookkeeping for both run loops."""

    def __init__(self, env, automata, timing, model, record, trace):
        self.env = env
        self.automata = automata
        self.timing = timing
        self.model = model
        self.record = record
        self.trace = trace
        self.full = record == "full"
        self.log_events = record in ("events", "full")

    def note_state(self, node: int, t: float) -> None:
        a = self.automata[node]
        total, core = a.handlers.state_bits(a.state, self.model)
        tr = self.trace
        if total > tr.storage_peak_bits:
            tr.storage_peak_bits = total
        if core > tr.storage_core_peak_bits:
            tr.storage_core_peak_bits = core
        if self.full:
            tr.events.append(("state", t, node, a.handlers.state_record(a.state)))

    def note_decision(self, node: int, value: Any, t: float, rnd: int | None) -> None:
        tr = self.trace
        prev = tr.decisions.get(node)
        if prev is not None:
            if prev[0] != value:
                raise DecisionChanged(f"node {node} re-decided {prev[0]!r} -> {value!r}")
            return
        tr.decisions[node] = (value, t, rnd)
        if self.log_events:
            tr.events.append(("decide", t, node, ("v", value)))

    def meter_send(self, msg: Message, t: float) -> int:
        bits = self.model.size_bits(msg.kind, msg.payload, msg.receiver is None)
        phase = self.model.phase_of(msg.kind)
        self.trace.meter.append((t, bits, msg.receiver is None, phase))
        if self.log_events:
            rcv = -1 if msg.receiver is None else msg.receiver
            if self.full:
                rec = self.automata[msg.sender].handlers.payload_record(msg.kind, msg.payload)
                self.trace.events.append(("send", t, msg.sender, msg.kind, rcv, bits, rec))
            else:
                self.trace.events.append(("send", t, msg.sender, msg.kind, rcv, bits))
        return bits

    def note_recv(self, node: int, msg: Message, t: float) -> None:
        if self.log_events:
            self.trace.events.append(("recv", t, node, msg.kind, msg.sender))


def _run_sync(env, automata, policy, timing, round_cap, model, record, trace):
    loop = _Loop(env, automata, timing, model, record, trace)
    unit = timing.unit
    active: set[int] = set()
    inbox_next: dict[int, list[Message]] = {}
    nodes = sorted(automata)

    def process_out(node, out, t, rnd):
        sends, decision, active_flag = out
        if decision is not None:
            loop.note_decision(node, decision, t, rnd)
        if active_flag is True:
            active.add(node)
        elif active_flag is False:
            active.discard(node)
        if sends:
            nbrs = env.neighbors(node, rnd)
            t_disp = t + timing.l
            for receiver, kind, payload in sends:
                if receiver is not None and receiver not in nbrs:
                    continue  # edge absent this slot: the send is a no-op
                msg = Message(node, receiver, kind, payload)
                loop.meter_send(msg, t_disp)
                targets = nbrs if receiver is None else (receiver,)
                for rcv in targets:
                    inbox_next.setdefault(rcv, []).append(msg)
        loop.note_state(node, t)

    # Round 0: init, then the first timer tick; sends land in round 1.
    for node in nodes:
        a = automata[node]
        ctx = Ctx(env.neighbors(node, 0), 0.0, 0)
        process_out(node, a.handlers.init(a.state, ctx), 0.0, 0)
        if node in active:
            process_out(node, a.handlers.on_timer(a.state, ctx), 0.0, 0)

    rnd = 1
    while True:
        inbox, inbox_next = inbox_next, {}
        if not inbox and not active:
            break
        t = rnd * unit
        if rnd > round_cap:
            trace.sim_time = t
            trace.rounds = rnd
            raise NonTermination(
                f"round cap {round_cap} exceeded with "
                f"{env.n - len(trace.decisions)} undecided nodes", trace)
        for node in nodes:
            msgs = inbox.get(node)
            is_active = node in active
            if not msgs and not is_active:
                continue
            a = automata[node]
            ctx = Ctx(env.neighbors(node, rnd), t, rnd)
            if msgs:
                on_message = a.handlers.on_message
                for msg in msgs:
                    loop.note_recv(node, msg, t)
                    process_out(node, on_message(a.state, msg, ctx), t, rnd)
            if node in active:
                process_out(node, a.handlers.on_timer(a.state, ctx), t, rnd)
        trace.sim_time = t
        rnd += 1

    trace.rounds = max((r for _, _, r in trace.decisions.values()), default=0)
    if len(trace.decisions) < env.n:
        raise NonTermination(
            f"quiesced with {env.n - len(trace.decisions)} undecided nodes", trace)
    trace.completed = True


def _run_async(env, automata, policy, timing, round_cap, model, record, trace):
    loop = _Loop(env, automata, timing, model, record, trace)
    unit = timing.unit
    cap_time = round_cap * unit
    assigner = make_assigner(policy, timing, env.edges())
    lifo = assigner.lifo
    heap: list = []
    seq = 0
    active: set[int] = set()
    timer_queued: set[int] = set()
    nodes = sorted(automata)

    def slot_of(t: float) -> int:
        return int(t // unit)

    def push(t, kind, data):
        nonlocal seq
        pri = -seq if (lifo and kind == "handle") else seq
        heapq.heappush(heap, (t, pri, seq, kind, data))
        seq += 1

    def schedule_timer(node, now):
        if node in active and node not in timer_queued:
            timer_queued.add(node)
            push(now + timing.l, "timer", node)

    def process_out(node, out, t):
        sends, decision, active_flag = out
        if decision is not None:
            loop.note_decision(node, decision, t, None)
        if active_flag is True:
            active.add(node)
            schedule_timer(node, t)
        elif active_flag is False:
            active.discard(node)
        if sends:
            nbrs = env.neighbors(node, slot_of(t))
            for receiver, kind, payload in sends:
                if receiver is not None and receiver not in nbrs:
                    continue
                msg = Message(node, receiver, kind, payload)
                loop.meter_send(msg, t)
                targets = nbrs if receiver is None else (receiver,)
                for rcv in targets:
                    delay = assigner.delivery_delay(node, rcv)
                    latency = assigner.transition_latency(rcv)
                    push(t + delay + latency, "handle", (msg, rcv, t + delay))
        loop.note_state(node, t)

    for node in nodes:
        a = automata[node]
        ctx = Ctx(env.neighbors(node, 0), 0.0, None)
        process_out(node, a.handlers.init(a.state, ctx), 0.0)

    while heap:
        t, _pri, _seq, kind, data = heapq.heappop(heap)
        if t > cap_time:
            trace.sim_time = t
            raise NonTermination(
                f"time cap {round_cap}*(l+d) exceeded with "
                f"{env.n - len(trace.decisions)} undecided nodes", trace)
        trace.sim_time = t
        if kind == "timer":
            node = data
            timer_queued.discard(node)
            if node not in active:
                continue
            a = automata[node]
            ctx = Ctx(env.neighbors(node, slot_of(t)), t, None)
            process_out(node, a.handlers.on_timer(a.state, ctx), t)
            schedule_timer(node, t)
        else:
            msg, node, t_deliver = data
            loop.note_recv(node, msg, t_deliver)
            a = automata[node]
            ctx = Ctx(env.neighbors(node, slot_of(t)), t, None)
            process_out(node, a.handlers.on_message(a.state, msg, ctx), t)

    if len(trace.decisions) < env.n:
        raise NonTermination(
            f"quiesced with {env.n - len(trace.decisions)} undecided nodes", trace)
    trace.completed = True


# ---------------------------------------------------------------------------
# Trace export: line-delimited records with a stable field order
# ---------------------------------------------------------------------------


def export_trace(trace: ExecutionTrace, digest: bool = False) -> str:
    """Serialize a trace, one event per line. Digest mode exports only the
    decisions and aggregate counters."""
    lines = []
    head = {
        "n": trace.n,
        "l": trace.timing.l,
        "d": trace.timing.d,
        "policy": trace.policy.label(),
        "seed": trace.policy.seed,
        "completed": trace.completed,
        "sim_time": trace.sim_time,
        "rounds": trace.rounds,
    }
    lines.append(json.dumps({"h": head}, sort_keys=True))
    for node in sorted(trace.decisions):
        value, t, rnd = trace.decisions[node]
        lines.append(json.dumps(
            {"decide": {"node": node, "value": _plain(value), "t": t, "round": rnd}},
            sort_keys=True))
    if digest:
        sent = len(trace.meter)
        bits = sum(m[1] for m in trace.meter)
        lines.append(json.dumps({"counters": {"sends": sent, "bits": bits}}, sort_keys=True))
    else:
        for i, ev in enumerate(trace.events):
            lines.append(json.dumps({"i": i, "e": [_plain(x) for x in ev]}, sort_keys=True))
    return "\n".join(lines) + "\n"


def _plain(x: Any) -> Any:
    if isinstance(x, tuple):
        return [_plain(v) for v in x]
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, set, frozenset)):
        return [_plain(v) for v in x]
    return x
