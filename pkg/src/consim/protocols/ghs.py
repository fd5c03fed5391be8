"""Minimum-spanning-tree consensus: fragments merge along minimum-weight
outgoing edges (levels, test/accept/reject, report, change-root, connect)
until the MST is complete; then the root requests values down the tree,
aggregates them back up, and broadcasts the result.

Two variants share the state machine. The directional variant exchanges
test/accept/reject pairs during the MWOE search. The broadcast variant
emulates it: each node broadcasts its (level, fragment id) at most once per
level, neighbors cache the announcements, and the search consults the cache,
deferring while the cached level lags the searcher's own level; every other
message is broadcast with an intended-receiver field.

Edge weights must be pairwise distinct (enforced at setup); the core-edge
endpoint with the larger UID becomes root once the tree is complete.
"""

from __future__ import annotations

from typing import Any

from ..functions import ConsensusSpec
from ..graphs import StaticGraph, Weight, uid_pair_weights
from ..metering import KindSpec, SizingModel
from ..runtime import Automaton, Ctx, Handlers, Message

SLEEPING, FIND, FOUND = "sleeping", "find", "found"
BASIC, BRANCH, REJECTED = "basic", "branch", "rejected"

# Tree phases for metering: the MST build, then the three tree waves.
PH_MST, PH_REQ, PH_COLLECT, PH_RESULT = "mst", "request", "convergecast", "result"


def kinds_registry(spec: ConsensusSpec) -> dict[str, KindSpec]:
    """Per-kind payload widths; the intended-receiver field of broadcast
    variants is priced whenever present in the payload."""

    def to_bits(payload, model):
        return model.uid_bits if "to" in payload else 0

    def collect_bits(payload, model):
        if spec.hierarchical:
            return spec.aggregate_bits + to_bits(payload, model)
        return len(payload["agg"]) * (model.uid_bits + model.value_bits) + to_bits(payload, model)

    value_width = spec.value_bits + spec.fractional_bits
    return {
        "connect": KindSpec(lambda p, m: m.level_bits + to_bits(p, m), PH_MST),
        "initiate": KindSpec(lambda p, m: m.level_bits + m.weight_bits + 1 + to_bits(p, m), PH_MST),
        "test": KindSpec(lambda p, m: m.level_bits + m.weight_bits + to_bits(p, m), PH_MST),
        "accept": KindSpec(lambda p, m: to_bits(p, m), PH_MST),
        "reject": KindSpec(lambda p, m: to_bits(p, m), PH_MST),
        "report": KindSpec(lambda p, m: m.weight_bits + to_bits(p, m), PH_MST),
        "changeroot": KindSpec(lambda p, m: to_bits(p, m), PH_MST),
        "announce": KindSpec(lambda p, m: m.level_bits + m.weight_bits, PH_MST),
        "request": KindSpec(lambda p, m: to_bits(p, m), PH_REQ),
        "collect": KindSpec(collect_bits, PH_COLLECT),
        "result": KindSpec(lambda p, m: value_width + to_bits(p, m), PH_RESULT),
    }


class GhsState:
    __slots__ = (
        "node", "n", "x", "spec", "bcast", "weights",
        "sn", "fn", "level", "se", "best_edge", "best_wt", "test_edge",
        "in_branch", "find_count", "pending", "halted",
        "cache", "announcements",
        "is_root", "parent", "children", "agg", "await_kids", "decided",
    )

    def __init__(self, node: int, n: int, x_i: Any, spec: ConsensusSpec,
                 bcast: bool, weights: dict[int, Weight]):
        self.node = node
        self.n = n
        self.x = x_i
        self.spec = spec
        self.bcast = bcast
        self.weights = weights          # neighbor -> edge weight
        self.sn = SLEEPING
        self.fn: Weight | None = None
        self.level = 0
        self.se = {v: BASIC for v in weights}
        self.best_edge: int | None = None
        self.best_wt: Weight | None = None   # None means +infinity
        self.test_edge: int | None = None
        self.in_branch: int | None = None
        self.find_count = 0
        self.pending: list[tuple[str, dict, int]] = []
        self.halted = False
        self.cache: dict[int, tuple[int, Weight]] = {}
        self.announcements = 0
        self.is_root = False
        self.parent: int | None = None
        self.children: tuple[int, ...] = ()
        self.agg = None
        self.await_kids = 0
        self.decided = None


def _wt_less(a: Weight | None, b: Weight | None) -> bool:
    """Compare weights with None as +infinity."""
    if a is None:
        return False
    if b is None:
        return True
    return a < b


class _Emit:
    """Collects sends and the decision of one transition."""

    __slots__ = ("state", "sends", "decision")

    def __init__(self, state: GhsState):
        self.state = state
        self.sends: list = []
        self.decision = None

    def send(self, to: int, kind: str, payload: dict) -> None:
        if self.state.bcast:
            self.sends.append((None, kind, {**payload, "to": to}))
        else:
            self.sends.append((to, kind, payload))

    def announce(self) -> None:
        st = self.state
        st.announcements += 1
        self.sends.append((None, "announce", {"level": st.level, "fid": st.fn}))

    def decide(self, value) -> None:
        self.state.decided = value
        self.decision = value


# --- classic GHS procedures -------------------------------------------------


def _wakeup(st: GhsState, em: _Emit) -> None:
    if st.sn != SLEEPING:
        return
    st.sn = FOUND
    st.level = 0
    st.find_count = 0
    if not st.weights:
        _become_root(st, em)  # isolated node: trivial MST
        return
    m = min(st.weights, key=st.weights.get)
    st.se[m] = BRANCH
    em.send(m, "connect", {"level": 0})


def _test(st: GhsState, em: _Emit) -> None:
    if st.bcast:
        _test_cached(st, em)
        return
    basics = [v for v, s in st.se.items() if s == BASIC]
    if basics:
        st.test_edge = min(basics, key=st.weights.get)
        em.send(st.test_edge, "test", {"level": st.level, "fid": st.fn})
    else:
        st.test_edge = None
        _report_check(st, em)


def _test_cached(st: GhsState, em: _Emit) -> None:
    """Broadcast emulation of the MWOE search: consult cached announcements,
    deferring while the cached neighbor level lags our own."""
    while True:
        basics = [v for v, s in st.se.items() if s == BASIC]
        if not basics:
            st.test_edge = None
            _report_check(st, em)
            return
        e = min(basics, key=st.weights.get)
        cached = st.cache.get(e)
        if cached is None or cached[0] < st.level:
            st.test_edge = e  # wait for e's announcement to catch up
            return
        if cached[1] == st.fn:
            st.se[e] = REJECTED
            continue
        st.test_edge = None
        if _wt_less(st.weights[e], st.best_wt):
            st.best_wt = st.weights[e]
            st.best_edge = e
        _report_check(st, em)
        return


def _report_check(st: GhsState, em: _Emit) -> None:
    if st.find_count == 0 and st.test_edge is None and st.sn == FIND:
        st.sn = FOUND
        em.send(st.in_branch, "report", {"w": st.best_wt})


def _change_root(st: GhsState, em: _Emit) -> None:
    if st.se[st.best_edge] == BRANCH:
        em.send(st.best_edge, "changeroot", {})
    else:
        st.se[st.best_edge] = BRANCH
        em.send(st.best_edge, "connect", {"level": st.level})


def _become_root(st: GhsState, em: _Emit) -> None:
    st.halted = True
    st.is_root = True
    st.parent = None
    kids = tuple(v for v, s in sorted(st.se.items()) if s == BRANCH)
    st.children = kids
    st.agg = st.spec.lift(st.node - 1, st.x) if st.spec.hierarchical else [(st.node, st.x)]
    st.await_kids = len(kids)
    for v in kids:
        em.send(v, "request", {})
    if not kids:
        _finish_root(st, em)


def _finish_root(st: GhsState, em: _Emit) -> None:
    if st.spec.hierarchical:
        value = st.spec.finalize(st.agg)
    else:
        x = [v for _, v in sorted(st.agg)]
        value = st.spec.evaluate(x)
    em.decide(value)
    for v in st.children:
        em.send(v, "result", {"value": value})


# --- message handlers; each returns True if consumed, False if deferred ----


def _on_connect(st: GhsState, payload: dict, sender: int, em: _Emit) -> bool:
    _wakeup(st, em)
    level = payload["level"]
    if level < st.level:  # absorb the lower-level fragment
        st.se[sender] = BRANCH
        em.send(sender, "initiate", {"level": st.level, "fid": st.fn, "state": st.sn})
        if st.sn == FIND:
            st.find_count += 1
        return True
    if st.se[sender] == BASIC:
        return False  # defer until our level rises or we connect over this edge
    # both endpoints sent connect over this edge: merge at level+1
    em.send(sender, "initiate",
            {"level": st.level + 1, "fid": st.weights[sender], "state": FIND})
    return True


def _on_initiate(st: GhsState, payload: dict, sender: int, em: _Emit) -> bool:
    st.level = payload["level"]
    st.fn = payload["fid"]
    st.sn = payload["state"]
    st.in_branch = sender
    st.best_edge = None
    st.best_wt = None
    if st.bcast:
        em.announce()
    for v, s in sorted(st.se.items()):
        if v != sender and s == BRANCH:
            em.send(v, "initiate", payload)
            if st.sn == FIND:
                st.find_count += 1
    if st.sn == FIND:
        _test(st, em)
    return True


def _on_test(st: GhsState, payload: dict, sender: int, em: _Emit) -> bool:
    _wakeup(st, em)
    if payload["level"] > st.level:
        return False  # defer the reply until our level catches up
    if payload["fid"] != st.fn:
        em.send(sender, "accept", {})
        return True
    if st.se[sender] == BASIC:
        st.se[sender] = REJECTED
    if st.test_edge != sender:
        em.send(sender, "reject", {})
    else:
        _test(st, em)  # our own test crossed theirs; no reject needed
    return True


def _on_accept(st: GhsState, payload: dict, sender: int, em: _Emit) -> bool:
    st.test_edge = None
    if _wt_less(st.weights[sender], st.best_wt):
        st.best_wt = st.weights[sender]
        st.best_edge = sender
    _report_check(st, em)
    return True


def _on_reject(st: GhsState, payload: dict, sender: int, em: _Emit) -> bool:
    if st.se[sender] == BASIC:
        st.se[sender] = REJECTED
    _test(st, em)
    return True


def _on_report(st: GhsState, payload: dict, sender: int, em: _Emit) -> bool:
    w = payload["w"]
    if sender != st.in_branch:
        st.find_count -= 1
        if _wt_less(w, st.best_wt):
            st.best_wt = w
            st.best_edge = sender
        _report_check(st, em)
        return True
    if st.sn == FIND:
        return False  # defer the other core node's report until we reported
    if _wt_less(st.best_wt, w):
        _change_root(st, em)
        return True
    if w is None and st.best_wt is None:  # no outgoing edge anywhere: MST done
        st.halted = True
        if st.node > sender:
            _become_root(st, em)
        return True
    return True  # the other side holds the fragment MWOE and will change root


def _on_changeroot(st: GhsState, payload: dict, sender: int, em: _Emit) -> bool:
    _change_root(st, em)
    return True


def _on_announce(st: GhsState, payload: dict, sender: int, em: _Emit) -> bool:
    st.cache[sender] = (payload["level"], payload["fid"])
    if st.sn == FIND and st.test_edge == sender:
        _test_cached(st, em)
    return True


def _on_request(st: GhsState, payload: dict, sender: int, em: _Emit) -> bool:
    st.parent = sender
    kids = tuple(v for v, s in sorted(st.se.items()) if s == BRANCH and v != sender)
    st.children = kids
    st.agg = st.spec.lift(st.node - 1, st.x) if st.spec.hierarchical else [(st.node, st.x)]
    st.await_kids = len(kids)
    for v in kids:
        em.send(v, "request", {})
    if not kids:
        em.send(st.parent, "collect", {"agg": st.agg})
    return True


def _on_collect(st: GhsState, payload: dict, sender: int, em: _Emit) -> bool:
    if st.spec.hierarchical:
        st.agg = st.spec.combine(st.agg, payload["agg"])
    else:
        st.agg = sorted(st.agg + payload["agg"])
    st.await_kids -= 1
    if st.await_kids == 0:
        if st.is_root:
            _finish_root(st, em)
        else:
            em.send(st.parent, "collect", {"agg": st.agg})
    return True


def _on_result(st: GhsState, payload: dict, sender: int, em: _Emit) -> bool:
    em.decide(payload["value"])
    for v in st.children:
        em.send(v, "result", payload)
    return True


_DISPATCH = {
    "connect": _on_connect,
    "initiate": _on_initiate,
    "test": _on_test,
    "accept": _on_accept,
    "reject": _on_reject,
    "report": _on_report,
    "changeroot": _on_changeroot,
    "announce": _on_announce,
    "request": _on_request,
    "collect": _on_collect,
    "result": _on_result,
}


def _drain_pending(st: GhsState, em: _Emit) -> None:
    progress = True
    while progress and st.pending:
        progress = False
        for item in list(st.pending):
            st.pending.remove(item)
            kind, payload, sender = item
            if _DISPATCH[kind](st, payload, sender, em):
                progress = True
            else:
                st.pending.append(item)


def _init(state: GhsState, ctx: Ctx):
    em = _Emit(state)
    if state.n == 1:
        _wakeup(state, em)
        return (em.sends, em.decision, False)
    _wakeup(state, em)
    return (em.sends, em.decision, False)


def _on_message(state: GhsState, msg: Message, ctx: Ctx):
    payload = msg.payload
    if state.bcast and msg.kind != "announce" and payload.get("to") != state.node:
        return ([], None, None)
    em = _Emit(state)
    if not _DISPATCH[msg.kind](state, payload, msg.sender, em):
        state.pending.append((msg.kind, payload, msg.sender))
    else:
        _drain_pending(state, em)
    return (em.sends, em.decision, None)


def _on_timer(state: GhsState, ctx: Ctx):
    return ([], None, False)


def _state_bits(state: GhsState, model: SizingModel) -> tuple[int, int]:
    deg = len(state.weights)
    per_edge = 2 * deg  # basic/branch/rejected per incident edge
    if state.bcast:
        per_edge += deg * (model.level_bits + model.weight_bits)
    if state.spec.hierarchical:
        agg_bits = state.spec.aggregate_bits
    else:
        agg_bits = (len(state.agg) if state.agg else 0) * (model.uid_bits + model.value_bits)
    core = (
        model.level_bits
        + model.weight_bits          # fragment id
        + 2                          # sn
        + model.weight_bits          # best weight
        + 4 * model.uid_bits         # best/test/in-branch/parent pointers
        + model.uid_bits + 1         # find_count / await_kids register
        + model.value_bits           # initial value
        + agg_bits
        + 3                          # halted / root / decided flags
    )
    return core + per_edge, core


def _tag_weight(w: Weight | None):
    return None if w is None else [w[0], list(w[1])]


def _state_record(state: GhsState):
    return {
        "sn": state.sn,
        "level": state.level,
        "fid": _tag_weight(state.fn),
        "se": {str(v): s for v, s in sorted(state.se.items())},
        "agg": _tag_agg(state.spec, state.agg),
        "decided": ("v", state.decided) if state.decided is not None else None,
    }


def _tag_agg(spec: ConsensusSpec, agg):
    if agg is None:
        return None
    if not spec.hierarchical:
        return [[u, ("v", v)] for u, v in agg]
    if isinstance(agg, tuple):  # (weighted sum, count) style aggregates
        return [("v", agg[0]), agg[1]]
    return ("v", agg)


def _payload_record(kind: str, payload) -> Any:
    if kind == "collect":
        return {"agg": "see-state", **{k: v for k, v in payload.items() if k == "to"}}
    if kind == "result":
        return {**payload, "value": ("v", payload["value"])}
    if kind in ("initiate", "test", "announce"):
        return {**payload, "fid": _tag_weight(payload["fid"])}
    if kind == "report":
        return {**payload, "w": _tag_weight(payload["w"])}
    return payload


HANDLERS = Handlers(
    init=_init,
    on_message=_on_message,
    on_timer=_on_timer,
    state_bits=_state_bits,
    state_record=_state_record,
    payload_record=_payload_record,
)


def ghs(
    spec: ConsensusSpec,
    graph: StaticGraph,
    x: list,
    weights: dict | None = None,
    comm: str = "directional",
) -> dict[int, Automaton]:
    """Automaton family for the spanning-tree consensus protocol."""
    if comm not in ("directional", "broadcast"):
        raise ValueError(f"unknown communication scheme {comm!r}")
    if len(x) != graph.n:
        raise ValueError(f"need {graph.n} initial values, got {len(x)}")
    wmap = weights if weights is not None else uid_pair_weights(graph)
    if len(set(wmap.values())) != len(wmap):
        raise ValueError("edge weights must be pairwise distinct")
    if set(wmap) != set(graph.edges):
        raise ValueError("weight map does not match the graph's edge set")
    bcast = comm == "broadcast"
    automata = {}
    for v in graph.nodes():
        incident = {u: wmap[(min(u, v), max(u, v))] for u in graph.neighbors(v)}
        automata[v] = Automaton(
            v, GhsState(v, graph.n, x[v - 1], spec, bcast, incident), HANDLERS)
    return automata


def ghs_directional(spec, graph, x, weights=None):
    return ghs(spec, graph, x, weights, comm="directional")


def ghs_broadcast(spec, graph, x, weights=None):
    return ghs(spec, graph, x, weights, comm="broadcast")


def branch_edges(automata: dict[int, Automaton]) -> set[tuple[int, int]]:
    """The branch-edge set after a completed run (the constructed MST)."""
    out = set()
    for v, a in automata.items():
        for u, s in a.state.se.items():
            if s == BRANCH:
                out.add((min(u, v), max(u, v)))
    return out


def announcement_count(automata: dict[int, Automaton]) -> int:
    return sum(a.state.announcements for a in automata.values())


def max_level(automata: dict[int, Automaton]) -> int:
    return max(a.state.level for a in automata.values())
