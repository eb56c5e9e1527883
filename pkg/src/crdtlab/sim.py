"""Deterministic discrete-event simulator for replication runs.

One process, one event loop, integer virtual time. The simulator gives
each approach the messaging substrate it assumes:

* op-based: reliable exactly-once causal broadcast (partitions buffer,
  never drop);
* pure op-based: the same broadcast, plus exposed timestamps and
  causal-stability callbacks;
* state/delta: unreliable point-to-point channels with seeded loss,
  duplication, reordering and partitions, plus periodic anti-entropy
  ticks.

Identical scenario plus seed yields an identical trace and report,
byte for byte. The run records middleware self-checks (exactly-once,
causal delivery order, stability safety) as violations instead of
crashing, so tests can assert on them.
"""

from __future__ import annotations

import heapq
import random
from dataclasses import dataclass, field
from typing import Any

from . import lattice as lat
from .causal import CausalState, Dot, state_leaf_count
from .delta import make_delta_replica
from .opbased import PreparedMessage, make_op_replica
from .purelog import (
    AuctionNotClosed,
    BEACON,
    Timestamp,
    make_pure_replica,
    make_timestamp,
    timestamp_leaves,
)
from .scenario import Command, Scenario, neighbors_of, parse_query
from .statebased import make_state_replica


def render_value(v: Any) -> str:
    """Canonical, order-independent rendering of query results."""
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, str)):
        return str(v)
    if isinstance(v, Dot):
        return repr(v)
    if isinstance(v, (frozenset, set)):
        return "{" + ", ".join(sorted(render_value(x) for x in v)) + "}"
    if isinstance(v, tuple):
        return "(" + ", ".join(render_value(x) for x in v) + ")"
    raise TypeError(f"cannot render {v!r}")


def payload_leaves(obj: Any) -> int:
    """Scalar-leaf count of a message payload (serialization-independent)."""
    if obj is None:
        return 0
    if isinstance(obj, Dot):
        return 1
    if isinstance(obj, (bool, int, float, str)):
        return 1
    if isinstance(obj, lat.LatticeValue):
        return lat.leaf_count(obj)
    if isinstance(obj, CausalState):
        return state_leaf_count(obj)
    if isinstance(obj, PreparedMessage):
        return payload_leaves(obj.payload)
    if isinstance(obj, (tuple, list, frozenset, set)):
        return sum(payload_leaves(x) for x in obj)
    raise TypeError(f"cannot size {obj!r}")


@dataclass(frozen=True)
class TraceRecord:
    tick: int
    kind: str
    node: Any
    text: str

    def line(self) -> str:
        return f"t={self.tick} {self.kind} n={self.node} {self.text}"


@dataclass
class MetricsReport:
    state_leaves: dict[int, int] = field(default_factory=dict)
    messages: int = 0
    payload: int = 0
    flush_messages: int = 0
    flush_payload: int = 0
    convergence_tick: int | None = None
    stability_lag: dict[int, int] = field(default_factory=dict)
    sends: list[tuple[int, int]] = field(default_factory=list)  # (tick, payload size)

    def lines(self) -> list[str]:
        out = []
        for node in sorted(self.state_leaves):
            out.append(f"state_leaves node={node} {self.state_leaves[node]}")
        out.append(f"messages {self.messages}")
        out.append(f"payload_leaves {self.payload}")
        out.append(f"flush_messages {self.flush_messages}")
        out.append(f"flush_payload_leaves {self.flush_payload}")
        tick = "never" if self.convergence_tick is None else str(self.convergence_tick)
        out.append(f"convergence_tick {tick}")
        if self.stability_lag:
            hist = " ".join(f"{lag}:{n}" for lag, n in sorted(self.stability_lag.items()))
            out.append(f"stability_lag {hist}")
        return out


@dataclass
class RunResult:
    scenario: Scenario
    trace: list[TraceRecord]
    metrics: MetricsReport
    assertions: list[tuple[int, bool, str]]
    violations: list[str]
    query_results: list[tuple[int, tuple, dict[int, str]]]
    final_snapshot: dict[int, tuple]

    @property
    def ok(self) -> bool:
        return not self.violations and all(ok for _, ok, _ in self.assertions)

    def report_lines(self, include_trace: bool = False) -> list[str]:
        sc = self.scenario
        out = [
            f"scenario nodes={sc.nodes} datatype={sc.datatype} approach={sc.approach} "
            f"topology={sc.topology} seed={sc.seed}",
        ]
        if include_trace:
            out.extend(r.line() for r in self.trace)
        out.extend(self.metrics.lines())
        for tick, q, answers in self.query_results:
            for node in sorted(answers):
                out.append(f"query t={tick} n={node} {' '.join(map(str, q))} -> {answers[node]}")
        for tick, ok, text in self.assertions:
            out.append(f"assert t={tick} {'PASS' if ok else 'FAIL'} {text}")
        for v in self.violations:
            out.append(f"violation {v}")
        out.append(f"result {'ok' if self.ok else 'failed'}")
        return out


class _PureNode:
    """Compacted replica plus an uncompacted shadow driven in lockstep."""

    def __init__(self, datatype: str, node: int):
        self.replica = make_pure_replica(datatype, node)
        self.shadow = make_pure_replica(datatype, node, compacted=False)

    def effect(self, op, t):
        self.replica.effect(op, t)
        self.shadow.effect(op, t)

    def stable(self, t):
        self.replica.stable(t)
        self.shadow.stable(t)


def _safe_query(replica, q: tuple) -> str:
    try:
        return render_value(replica.query(q))
    except AuctionNotClosed:
        return "error:auction-not-closed"


class Simulator:
    """Executes one scenario; see run()."""

    def __init__(self, scenario: Scenario):
        self.sc = scenario
        self.rng = random.Random(scenario.seed)
        self.nodes = list(range(scenario.nodes))
        self.now = 0
        self._seq = 0
        self._queue: list[tuple[int, int, str, tuple]] = []
        self._cancelled: set[int] = set()
        self.trace: list[TraceRecord] = []
        self.metrics = MetricsReport()
        self.assertions: list[tuple[int, bool, str]] = []
        self.violations: list[str] = []
        self.query_results: list[tuple[int, tuple, dict[int, str]]] = []
        self.partition: tuple[frozenset, ...] | None = None
        self._converged_since: int | None = None

        approach = scenario.approach
        if approach == "op":
            self.replicas = {i: make_op_replica(scenario.datatype, i) for i in self.nodes}
        elif approach == "pure":
            self.replicas = {i: _PureNode(scenario.datatype, i) for i in self.nodes}
        elif approach == "state":
            self.replicas = {i: make_state_replica(scenario.datatype, i) for i in self.nodes}
        else:
            improved = approach == "delta-improved"
            fse = scenario.fullstate_every or None
            self.replicas = {
                i: make_delta_replica(scenario.datatype, i, improved=improved, fullstate_every=fse)
                for i in self.nodes
            }
        self._snapshot_queries = self._pick_snapshot_queries()

        # broadcast layer state (op/pure)
        self._clocks: dict[int, dict] = {i: {} for i in self.nodes}
        self._pending: dict[int, list] = {i: [] for i in self.nodes}
        self._held: dict[int, list] = {i: [] for i in self.nodes}
        self._last_from: dict[int, dict] = {i: {} for i in self.nodes}
        self._stabilized: dict[int, set] = {i: set() for i in self.nodes}
        self._delivered_at: dict[tuple[int, Timestamp], int] = {}
        self._deliveries: dict[int, list[Timestamp]] = {i: [] for i in self.nodes}
        self._delivered_count: dict[tuple, int] = {}

        self._update_convergence()

    # -- event machinery ------------------------------------------------
    def _schedule(self, when: int, kind: str, data: tuple) -> int:
        self._seq += 1
        heapq.heappush(self._queue, (when, self._seq, kind, data))
        return self._seq

    def _note(self, kind: str, node: Any, text: str) -> None:
        self.trace.append(TraceRecord(self.now, kind, node, text))

    def run(self) -> RunResult:
        sc = self.sc
        if sc.approach in ("state", "delta-naive", "delta-improved") and sc.commands:
            horizon = max(c.tick for c in sc.commands)
            for t in range(sc.sync_every, horizon + 1, sc.sync_every):
                self._schedule(t, "sync", ())
        for cmd in sc.commands:
            self._schedule(cmd.tick, "cmd", (cmd,))
        while self._queue:
            when, seq, kind, data = heapq.heappop(self._queue)
            if seq in self._cancelled:
                continue
            self.now = when
            if kind == "cmd":
                self._run_command(data[0])
            elif kind == "arrive":
                self._broadcast_arrive(*data)
            elif kind == "chan":
                self._chan_arrive(*data)
            elif kind == "sync":
                self._sync_tick()
        self._finalize_checks()
        self.metrics.state_leaves = {i: self._state_leaves(i) for i in self.nodes}
        self.metrics.convergence_tick = self._converged_since
        return RunResult(
            scenario=self.sc,
            trace=self.trace,
            metrics=self.metrics,
            assertions=self.assertions,
            violations=self.violations,
            query_results=self.query_results,
            final_snapshot={i: self._snapshot(i) for i in self.nodes},
        )

    # -- commands --------------------------------------------------------
    def _run_command(self, cmd: Command) -> None:
        if cmd.verb == "op":
            self._invoke(cmd.node, cmd.args)
        elif cmd.verb == "partition":
            self.partition = cmd.args
            groups = " | ".join(",".join(map(str, sorted(g))) for g in cmd.args)
            self._note("partition", "-", groups)
        elif cmd.verb == "heal":
            self.partition = None
            self._note("heal", "-", "")
            self._release_held()
        elif cmd.verb == "flush":
            self._note("flush", "-", "")
            self._flush()
        elif cmd.verb == "query-all":
            answers = {i: self._query(i, cmd.args) for i in self.nodes}
            for i in self.nodes:
                self._note("query", i, f"{' '.join(map(str, cmd.args))} -> {answers[i]}")
            self.query_results.append((self.now, cmd.args, answers))
        elif cmd.verb == "assert-converged":
            snaps = {i: self._snapshot(i) for i in self.nodes}
            ok = len(set(snaps.values())) == 1
            detail = "converged" if ok else "diverged: " + "; ".join(
                f"n{i}={'|'.join(snaps[i])}" for i in self.nodes
            )
            self.assertions.append((self.now, ok, detail))
            self._note("assert", "-", f"{'PASS' if ok else 'FAIL'} {detail}")

    def _invoke(self, node: int, op: tuple) -> None:
        self._note("invoke", node, " ".join(map(str, op)))
        approach = self.sc.approach
        if approach in ("op", "pure"):
            self._broadcast(node, op)
        else:
            self.replicas[node].mutate(op)
            self._update_convergence()

    # -- causal broadcast (op and pure modes) ----------------------------
    def _broadcast(self, origin: int, op: tuple) -> None:
        clock = self._clocks[origin]
        clock[origin] = clock.get(origin, 0) + 1
        t = make_timestamp(origin, clock)
        if self.sc.approach == "op":
            payload: Any = self.replicas[origin].prepare(op)
        else:
            payload = self.replicas[origin].replica.prepare(op)
        msg_id = (origin, t.counter)
        self._deliver_broadcast(origin, origin, t, payload, msg_id)
        for dest in self.nodes:
            if dest == origin:
                continue
            delay = 1 + (self.rng.randint(0, self.sc.reorder) if self.sc.reorder else 0)
            self.metrics.messages += 1
            size = payload_leaves(payload)
            self.metrics.payload += size
            self.metrics.sends.append((self.now, size))
            self._schedule(self.now + delay, "arrive", (dest, origin, t, payload, msg_id))

    def _crossing(self, a: int, b: int) -> bool:
        if self.partition is None:
            return False
        ga = next((g for g in self.partition if a in g), frozenset([a]))
        return b not in ga

    def _broadcast_arrive(self, dest: int, origin: int, t: Timestamp, payload, msg_id) -> None:
        if self._crossing(origin, dest):
            self._held[dest].append((origin, t, payload, msg_id))
            self._note("held", dest, f"from n{origin} {t.render()}")
            return
        self._pending[dest].append((origin, t, payload, msg_id))
        self._drain(dest)

    def _ready(self, dest: int, t: Timestamp) -> bool:
        clock = self._clocks[dest]
        if t.entry(t.origin) != clock.get(t.origin, 0) + 1:
            return False
        return all(n <= clock.get(r, 0) for r, n in t.vector if r != t.origin)

    def _drain(self, dest: int) -> None:
        progressed = True
        while progressed:
            progressed = False
            for idx, (origin, t, payload, msg_id) in enumerate(self._pending[dest]):
                if self._ready(dest, t):
                    del self._pending[dest][idx]
                    self._clocks[dest][origin] = self._clocks[dest].get(origin, 0) + 1
                    self._deliver_broadcast(dest, origin, t, payload, msg_id)
                    progressed = True
                    break

    def _deliver_broadcast(self, dest: int, origin: int, t: Timestamp, payload, msg_id) -> None:
        count = self._delivered_count.get((msg_id, dest), 0) + 1
        self._delivered_count[(msg_id, dest)] = count
        if count > 1:
            self.violations.append(f"exactly-once broken: {msg_id} delivered {count}x at n{dest}")
        for stable_t in self._stabilized[dest]:
            if t.concurrent(stable_t):
                self.violations.append(
                    f"stability safety broken at n{dest}: {t.render()} concurrent with stabilized {stable_t.render()}"
                )
        if self.sc.approach == "op":
            self.replicas[dest].effect(payload)
            self._note("deliver", dest, f"from n{origin} {payload.payload}")
        else:
            self.replicas[dest].effect(payload, t)
            self._note("deliver", dest, f"from n{origin} {t.render()} {' '.join(map(str, payload))}")
        self._deliveries[dest].append(t)
        self._last_from[dest][origin] = t
        self._delivered_at[(dest, t)] = self.now
        if self.sc.approach == "pure":
            self._stability_scan(dest)
        self._update_convergence()

    def _stability_scan(self, node: int) -> None:
        lasts = self._last_from[node]
        if len(lasts) < len(self.nodes):
            return
        newly = [
            t
            for t in self._deliveries[node]
            if t not in self._stabilized[node] and all(t.leq(lasts[j]) for j in self.nodes)
        ]
        for t in sorted(newly, key=lambda ts: ts.sort_key()):
            self._stabilized[node].add(t)
            self.replicas[node].stable(t)
            lag = self.now - self._delivered_at[(node, t)]
            self.metrics.stability_lag[lag] = self.metrics.stability_lag.get(lag, 0) + 1
            self._note("stable", node, t.render())
        if newly:
            self._update_convergence()

    def _release_held(self) -> None:
        for dest in self.nodes:
            held, self._held[dest] = self._held[dest], []
            for origin, t, payload, msg_id in held:
                delay = 1 + (self.rng.randint(0, self.sc.reorder) if self.sc.reorder else 0)
                self._schedule(self.now + delay, "arrive", (dest, origin, t, payload, msg_id))
                self._note("release", dest, f"from n{origin} {t.render()}")

    # -- unreliable channels (state and delta modes) ----------------------
    def _sync_tick(self) -> None:
        approach = self.sc.approach
        for node in self.nodes:
            neighbors = neighbors_of(self.sc, node)
            if approach == "state":
                for dest in neighbors:
                    self._chan_send(node, dest, self.replicas[node].state)
            else:
                for dest, payload in self.replicas[node].tick(neighbors):
                    self._chan_send(node, dest, payload)

    def _chan_send(self, src: int, dest: int, payload) -> None:
        if self._crossing(src, dest):
            self._note("part-drop", dest, f"from n{src}")
            return
        if self.sc.drop and self.rng.random() < self.sc.drop:
            self._note("drop", dest, f"from n{src}")
            return
        copies = 1
        if self.sc.dup and self.rng.random() < self.sc.dup:
            copies = 2
        size = payload_leaves(payload)
        for c in range(copies):
            delay = 1 + (self.rng.randint(0, self.sc.reorder) if self.sc.reorder else 0)
            self.metrics.messages += 1
            self.metrics.payload += size
            self.metrics.sends.append((self.now, size))
            if c:
                self._note("dup", dest, f"from n{src}")
            self._schedule(self.now + delay, "chan", (dest, src, payload))

    def _chan_arrive(self, dest: int, src: int, payload) -> None:
        if self.sc.approach == "state":
            self.replicas[dest].merge(payload)
        else:
            self.replicas[dest].receive(src, payload)
        self._note("merge", dest, f"from n{src} leaves={payload_leaves(payload)}")
        self._update_convergence()

    # -- flush -------------------------------------------------------------
    def _flush(self) -> None:
        if self.sc.approach in ("op", "pure"):
            # release everything still buffered or in flight, then drain
            for dest in self.nodes:
                held, self._held[dest] = self._held[dest], []
                for origin, t, payload, msg_id in held:
                    self._pending[dest].append((origin, t, payload, msg_id))
            remaining = []
            for when, seq, kind, data in self._queue:
                if kind == "arrive" and seq not in self._cancelled:
                    self._cancelled.add(seq)
                    remaining.append(data)
            for dest, origin, t, payload, msg_id in remaining:
                self._pending[dest].append((origin, t, payload, msg_id))
            progressed = True
            while progressed:
                progressed = False
                for dest in self.nodes:
                    before = len(self._pending[dest])
                    self._drain(dest)
                    progressed = progressed or len(self._pending[dest]) != before
            leftovers = {i: len(p) for i, p in self._pending.items() if p}
            if leftovers:
                self.violations.append(f"flush left undeliverable messages: {leftovers}")
            return
        # state/delta: reliable full-state exchange to a fixpoint
        changed = True
        while changed:
            changed = False
            for src in self.nodes:
                state = self.replicas[src].state
                for dest in neighbors_of(self.sc, src):
                    before = self.replicas[dest].state
                    if self.sc.approach == "state":
                        self.replicas[dest].merge(state)
                    else:
                        self.replicas[dest].receive(src, state)
                    self.metrics.flush_messages += 1
                    self.metrics.flush_payload += payload_leaves(state)
                    if self.replicas[dest].state != before:
                        changed = True
        self._note("flushed", "-", "")
        self._update_convergence()

    # -- queries, snapshots, convergence ----------------------------------
    def _pick_snapshot_queries(self) -> tuple[tuple, ...]:
        approach = self.sc.approach
        if approach == "pure":
            queries = self.replicas[0].replica.datatype.snapshot_queries
        else:
            queries = self.replicas[0].snapshot_queries
        if self.sc.datatype == "auction":
            queries = queries + (("winner",),)
        return queries

    def _query(self, node: int, q: tuple) -> str:
        replica = self.replicas[node].replica if self.sc.approach == "pure" else self.replicas[node]
        return _safe_query(replica, q)

    def _snapshot(self, node: int) -> tuple:
        return tuple(self._query(node, q) for q in self._snapshot_queries)

    def _update_convergence(self) -> None:
        snaps = {self._snapshot(i) for i in self.nodes}
        if len(snaps) == 1:
            if self._converged_since is None:
                self._converged_since = self.now
        else:
            self._converged_since = None

    def _state_leaves(self, node: int) -> int:
        if self.sc.approach == "pure":
            return self.replicas[node].replica.state_leaves()
        return self.replicas[node].state_leaves()

    # -- end-of-run middleware checks --------------------------------------
    def _finalize_checks(self) -> None:
        if self.sc.approach in ("op", "pure"):
            if not causal_order_ok(self._deliveries):
                self.violations.append("causal delivery order violated")
            expected = len(self.nodes)
            for msg_id in sorted({m for m, _ in self._delivered_count}):
                got = sum(n for (m, _), n in self._delivered_count.items() if m == msg_id)
                if got != expected:
                    self.violations.append(f"message {msg_id} delivered {got}/{expected} times")

    @property
    def shadow_replicas(self):
        """Uncompacted reference replicas (pure mode only)."""
        return {i: self.replicas[i].shadow for i in self.nodes}


def causal_order_ok(deliveries: dict[int, list[Timestamp]]) -> bool:
    """True iff every node's delivery order extends happens-before."""
    for seq in deliveries.values():
        for i, earlier in enumerate(seq):
            for later in seq[i + 1 :]:
                if later.lt(earlier):
                    return False
    return True


def run_scenario(scenario: Scenario) -> RunResult:
    return Simulator(scenario).run()


def stability_detect(last_from: dict[Any, Timestamp], node_ids, candidates) -> list[Timestamp]:
    """Timestamps from ``candidates`` that are causally stable given the
    last-delivered-per-origin matrix row of one node."""
    if any(j not in last_from for j in node_ids):
        return []
    return sorted(
        (t for t in candidates if all(t.leq(last_from[j]) for j in node_ids)),
        key=lambda t: t.sort_key(),
    )
