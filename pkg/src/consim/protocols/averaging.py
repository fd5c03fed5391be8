"""Average-based consensus: per synchronous round each node moves toward its
neighbors under Metropolis weights W_ij = 1/(1 + max(deg_i, deg_j)) (or the
uniform 1/n variant on complete graphs).

Values are fixed-point integers. Each undirected edge applies one rounded
delta and its exact negation, so the sum of all node values is invariant
round by round. Individual nodes cannot detect global epsilon-convergence,
so the harness computes the round budget K from the weight matrix's
second-largest eigenvalue modulus and hands it to every node; this
centralized termination costs zero protocol messages and is flagged in the
run notes.

The round recursion is also available as a batch kernel (consim._kernels,
compiled when the extension built) producing a digest trace identical in
decisions and counters to the automaton path.
"""

from __future__ import annotations

import math
from typing import Any

import numpy as np

from ..functions import round_div
from ..graphs import EdgeSchedule, StaticGraph
from ..metering import KindSpec, SizingModel
from ..runtime import (
    Automaton, Ctx, ExecutionTrace, Handlers, Message, SchedulerPolicy,
    TimingParams,
)
from .. import _kernels

KINDS = {
    "avg": KindSpec(lambda p, m: m.fixed_value_bits, "main"),
    # time-varying variant: the sender's instantaneous degree rides along
    "avg-dyn": KindSpec(lambda p, m: m.fixed_value_bits + m.uid_bits, "main"),
}

TERMINATION_NOTE = "avg-termination:centralized-round-budget-zero-messages"


class AvgState:
    __slots__ = (
        "node", "n", "p", "rounds_total", "rnd", "x", "comm",
        "denoms", "uniform", "dynamic", "inbox", "prev_deg", "decided",
    )

    def __init__(self, node, n, x_fixed, p, rounds_total, comm,
                 denoms, uniform, dynamic):
        self.node = node
        self.n = n
        self.p = p
        self.rounds_total = rounds_total
        self.rnd = 0
        self.x = x_fixed
        self.comm = comm
        self.denoms = denoms        # static: neighbor -> 1 + max(deg_i, deg_j)
        self.uniform = uniform
        self.dynamic = dynamic
        self.inbox: dict[int, tuple] = {}
        self.prev_deg = 0
        self.decided = None


def _apply_round(state: AvgState) -> None:
    x0 = state.x
    delta = 0
    for sender, (val, sdeg) in state.inbox.items():
        if state.dynamic:
            den = 1 + max(state.prev_deg, sdeg)
        else:
            den = state.denoms[sender]
        delta += round_div(val - x0, den)
    state.x = x0 + delta
    state.inbox = {}


def _sends(state: AvgState, ctx: Ctx):
    if state.dynamic:
        kind = "avg-dyn"
        payload = (state.x, len(ctx.neighbors))
    else:
        kind = "avg"
        payload = (state.x, 0)
    state.prev_deg = len(ctx.neighbors)
    if state.comm == "broadcast":
        return [(None, kind, payload)]
    return [(v, kind, payload) for v in ctx.neighbors]


def _init(state: AvgState, ctx: Ctx):
    if state.rounds_total == 0 or state.n == 1:
        state.decided = state.x
        return ([], state.x, False)
    return ([], None, True)


def _on_timer(state: AvgState, ctx: Ctx):
    if state.rnd > 0:
        _apply_round(state)
    if state.rnd == state.rounds_total:
        state.decided = state.x
        return ([], state.x, False)
    state.rnd += 1
    return (_sends(state, ctx), None, True)


def _on_message(state: AvgState, msg: Message, ctx: Ctx):
    state.inbox[msg.sender] = msg.payload
    return ([], None, None)


def _state_bits(state: AvgState, model: SizingModel) -> tuple[int, int]:
    value_bits = model.fixed_value_bits
    core = (
        value_bits                       # current value
        + max(1, state.rounds_total.bit_length())  # round counter
        + 1                              # decided flag
    )
    per_edge = len(state.denoms) * model.uid_bits  # weight denominators
    if state.dynamic:
        per_edge = len(state.inbox) * (value_bits + model.uid_bits)
    return core + per_edge, core


def _state_record(state: AvgState):
    return {"round": state.rnd, "x": ("v", state.x)}


def _payload_record(kind: str, payload) -> Any:
    return [("v", payload[0]), payload[1]]


HANDLERS = Handlers(
    init=_init,
    on_message=_on_message,
    on_timer=_on_timer,
    state_bits=_state_bits,
    state_record=_state_record,
    payload_record=_payload_record,
)


def metropolis_denominators(graph: StaticGraph) -> dict[tuple[int, int], int]:
    return {
        (u, v): 1 + max(graph.degree(u), graph.degree(v))
        for u, v in graph.edges
    }


def metropolis_matrix(graph: StaticGraph) -> np.ndarray:
    n = graph.n
    W = np.zeros((n, n))
    for u, v in graph.edges:
        w = 1.0 / (1 + max(graph.degree(u), graph.degree(v)))
        W[u - 1, v - 1] = w
        W[v - 1, u - 1] = w
    np.fill_diagonal(W, 1.0 - W.sum(axis=1))
    return W


def uniform_matrix(n: int) -> np.ndarray:
    return np.full((n, n), 1.0 / n)


def slem(W: np.ndarray) -> float:
    """Second-largest eigenvalue modulus of a symmetric stochastic matrix."""
    evals = np.sort(np.abs(np.linalg.eigvalsh(W)))
    return float(evals[-2]) if len(evals) > 1 else 0.0


def choose_fractional_bits(graph: StaticGraph, epsilon: float, gap: float) -> int:
    """Enough precision that quantization (at most half a unit per edge per
    round, damped by the spectral gap) stays below epsilon/4."""
    max_deg = max(graph.degree(v) for v in graph.nodes())
    need = math.log2(2.0 * max_deg / (epsilon * max(gap, 1e-12)))
    return max(16, math.ceil(need))


def round_budget(graph: StaticGraph, x: list[float], epsilon: float,
                 uniform: bool = False) -> tuple[int, int]:
    """(K, p): rounds so the worst-case error drops below epsilon/2, and the
    fixed-point precision keeping quantization below epsilon/4."""
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    W = uniform_matrix(graph.n) if uniform else metropolis_matrix(graph)
    lam = slem(W)
    p = choose_fractional_bits(graph, epsilon, 1.0 - lam)
    arr = np.asarray(x, dtype=float)
    err0 = float(np.linalg.norm(arr - arr.mean()))
    if err0 == 0.0 or lam == 0.0:
        return (1, p)
    k = math.ceil(math.log(max(err0, epsilon) * 2.0 / epsilon) / -math.log(lam))
    return (max(1, k), p)


def averaging(
    graph: StaticGraph,
    x: list[float],
    epsilon: float,
    weights: str = "metropolis",
    comm: str = "directional",
    rounds: int | None = None,
    fractional_bits: int | None = None,
) -> tuple[dict[int, Automaton], int, int]:
    """Automaton family plus its (K, p) budget. Synchronous mode only."""
    if weights not in ("metropolis", "uniform"):
        raise ValueError(f"unknown weight scheme {weights!r}")
    if weights == "uniform" and graph.m != graph.n * (graph.n - 1) // 2:
        raise ValueError("uniform weights require a complete graph")
    k, p = round_budget(graph, x, epsilon, uniform=weights == "uniform")
    if rounds is not None:
        k = rounds
    if fractional_bits is not None:
        p = fractional_bits
    dens = metropolis_denominators(graph)
    automata = {}
    for v in graph.nodes():
        node_dens = (
            {u: graph.n for u in graph.neighbors(v)}
            if weights == "uniform"
            else {u: dens[(min(u, v), max(u, v))] for u in graph.neighbors(v)}
        )
        st = AvgState(v, graph.n, round(x[v - 1] * (1 << p)), p, k, comm,
                      node_dens, weights == "uniform", dynamic=False)
        automata[v] = Automaton(v, st, HANDLERS)
    return automata, k, p


def averaging_dynamic(
    schedule: EdgeSchedule,
    x: list[float],
    epsilon: float,
    comm: str = "directional",
    rounds: int | None = None,
    fractional_bits: int | None = None,
) -> tuple[dict[int, Automaton], int, int]:
    """Averaging over a D-connected schedule with per-slot Metropolis weights
    recomputed from instantaneous degrees; K comes from the period-product
    matrix."""
    k, p = dynamic_round_budget(schedule, x, epsilon)
    if rounds is not None:
        k = rounds
    if fractional_bits is not None:
        p = fractional_bits
    automata = {}
    for v in range(1, schedule.n + 1):
        st = AvgState(v, schedule.n, round(x[v - 1] * (1 << p)), p, k, comm,
                      {}, False, dynamic=True)
        automata[v] = Automaton(v, st, HANDLERS)
    return automata, k, p


def slot_matrix(schedule: EdgeSchedule, slot: int) -> np.ndarray:
    n = schedule.n
    deg = {v: len(schedule.neighbors(v, slot)) for v in range(1, n + 1)}
    W = np.zeros((n, n))
    for u, v in schedule.edges_at(slot):
        w = 1.0 / (1 + max(deg[u], deg[v]))
        W[u - 1, v - 1] = w
        W[v - 1, u - 1] = w
    np.fill_diagonal(W, 1.0 - W.sum(axis=1))
    return W


def dynamic_round_budget(schedule: EdgeSchedule, x: list[float],
                         epsilon: float) -> tuple[int, int]:
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    prod = np.eye(schedule.n)
    for s in range(schedule.period):
        prod = slot_matrix(schedule, s) @ prod
    lam = slem(prod) ** (1.0 / schedule.period)
    base = schedule.base_union()
    p = choose_fractional_bits(base, epsilon, 1.0 - min(lam, 1.0 - 1e-12))
    arr = np.asarray(x, dtype=float)
    err0 = float(np.linalg.norm(arr - arr.mean()))
    if err0 == 0.0 or lam <= 0.0:
        return (schedule.period, p)
    k = math.ceil(math.log(max(err0, epsilon) * 2.0 / epsilon) / -math.log(lam))
    k = max(1, math.ceil(k / schedule.period) * schedule.period)
    return (k, p)


# ---------------------------------------------------------------------------
# Batch fast path over the compiled (or numpy) kernel
# ---------------------------------------------------------------------------


def simulate_fast(
    graph: StaticGraph,
    x: list[float],
    epsilon: float,
    model: SizingModel,
    weights: str = "metropolis",
    comm: str = "directional",
    timing: TimingParams = TimingParams(),
    rounds: int | None = None,
    fractional_bits: int | None = None,
    seed: int = 0,
) -> ExecutionTrace:
    """Digest-trace equivalent of running the automaton family synchronously,
    with the round recursion executed by the batch kernel and the counters
    computed in closed form."""
    if weights == "uniform" and graph.m != graph.n * (graph.n - 1) // 2:
        raise ValueError("uniform weights require a complete graph")
    k, p = round_budget(graph, x, epsilon, uniform=weights == "uniform")
    if rounds is not None:
        k = rounds
    if fractional_bits is not None:
        p = fractional_bits
    n = graph.n
    xf = np.array([round(v * (1 << p)) for v in x], dtype=np.int64)
    eu = np.array([u - 1 for u, _ in graph.edges], dtype=np.int64)
    ev = np.array([v - 1 for _, v in graph.edges], dtype=np.int64)
    if weights == "uniform":
        dens = np.full(graph.m, n, dtype=np.int64)
    else:
        dmap = metropolis_denominators(graph)
        dens = np.array([dmap[e] for e in graph.edges], dtype=np.int64)
    _kernels.run_rounds(xf, eu, ev, dens, k)

    policy = SchedulerPolicy("synchronous", seed)
    trace = ExecutionTrace(n=n, timing=timing, policy=policy, record="digest")
    unit = timing.unit
    for v in range(1, n + 1):
        trace.decisions[v] = (int(xf[v - 1]), k * unit, k)
    bits = model.size_bits("avg", (0, 0), comm == "broadcast")
    from ..metering import message_bytes

    per_msg_bytes = message_bytes(bits)
    if comm == "broadcast":
        count = k * n
        trace.meter_agg = {(True, "main"): (count, count * per_msg_bytes)}
    else:
        count = k * 2 * graph.m
        trace.meter_agg = {(False, "main"): (count, count * per_msg_bytes)}
    max_deg = max(graph.degree(v) for v in graph.nodes())
    core = model.fixed_value_bits + max(1, k.bit_length()) + 1
    trace.storage_peak_bits = core + max_deg * model.uid_bits
    trace.storage_core_peak_bits = core
    trace.sim_time = k * unit
    trace.rounds = k
    trace.completed = True
    trace.notes.append(TERMINATION_NOTE)
    trace.meta["mode"] = policy.label()
    trace.meta["kernel"] = _kernels.BACKEND
    trace.meta["rounds_budget"] = k
    trace.meta["fractional_bits"] = p
    return trace
