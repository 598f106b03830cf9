"""Deterministic discrete-event simulation of the dual-path network.

Links deliver reliably with unit latency; a frame sent to a departed peer
is absorbed. Events are totally ordered by (time, emitting node id,
per-node emission counter), so a run is a pure function of its scenario
configuration, seed included.

The trace records ground truth: every link transmission, every plaintext
peer id each node observed through decryption (tagged with the cycle it
belongs to, which the nodes themselves do not know), and per-cycle
bookkeeping used by the adversary analysis. The global observer is a tap
over the same link events: when disabled, its log stays empty even though
the ground-truth trace is still written.
"""

from __future__ import annotations

import heapq
import io
from dataclasses import dataclass, field
from random import Random
from typing import Callable, Optional

from .config import ScenarioConfig
from .directory import PeerRecord
from .envelope import FrameClass, Packet, PeerId, SCHEME_ASYMMETRIC
from .node import DualPath, PeerNode, RotationPolicy, SupernodeNode

Ticks = int


class SimulationError(Exception):
    pass


@dataclass(frozen=True)
class LinkEvent:
    time: Ticks
    src: PeerId
    dst: PeerId
    size: int
    frame_class: FrameClass


@dataclass(frozen=True)
class KnowledgeEntry:
    time: Ticks
    peer: PeerId
    ids: frozenset[PeerId]
    cycle: Optional[int]
    context: str


@dataclass
class AttemptRecord:
    attempt: int
    cycle_id: bytes
    request_hops: tuple[PeerId, ...]
    response_hops: tuple[PeerId, ...]
    session_key_id: bytes


PENDING = "pending"
COMPLETED = "completed"
FAILED = "failed"


@dataclass
class CycleRecord:
    index: int
    requester: PeerId
    provider: PeerId
    started: Ticks
    status: str = PENDING
    attempts: list[AttemptRecord] = field(default_factory=list)
    completed_attempt: Optional[int] = None
    live_at_completion: Optional[frozenset[PeerId]] = None
    data_events: list[int] = field(default_factory=list)
    finished: Optional[Ticks] = None


@dataclass
class Trace:
    """Ground-truth run record plus the adversary-visible taps."""
    l_req: int
    l_resp: int
    pad_size: int
    observer_enabled: bool = False
    colluders: frozenset[PeerId] = frozenset()
    link_events: list[LinkEvent] = field(default_factory=list)
    observer_log: list[LinkEvent] = field(default_factory=list)
    knowledge: list[KnowledgeEntry] = field(default_factory=list)
    cycles: list[CycleRecord] = field(default_factory=list)
    sends: int = 0
    delivered: int = 0
    absorbed: int = 0
    convergence_lag: Ticks = 0
    asymmetric_seals: int = 0
    symmetric_seals: int = 0
    # (src, dst) -> [asymmetric, symmetric] seal counts for direct sends
    # (control frames and response hop frames; onion layers are not
    # pair-attributed because their sealer never addresses the hop directly)
    direct_seals: dict[tuple[PeerId, PeerId], list[int]] = field(default_factory=dict)

    def observe(self, event: LinkEvent) -> None:
        """The global observer's tap: interception only, no key material."""
        if self.observer_enabled:
            self.observer_log.append(event)

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write("time,src,dst,size,class\n")
        for e in self.link_events:
            out.write("%d,%d,%d,%d,%s\n"
                      % (e.time, e.src, e.dst, e.size, e.frame_class.name))
        return out.getvalue()


@dataclass
class Metrics:
    cycles_attempted: int = 0
    cycles_completed: int = 0
    cycles_failed: int = 0
    mean_transmissions_per_cycle: float = 0.0
    asymmetric_seals: int = 0
    symmetric_seals: int = 0
    anonymity_colluders: list[int] = field(default_factory=list)
    anonymity_observer: list[int] = field(default_factory=list)
    statistical_intersection_mean: Optional[float] = None
    directory_convergence_lag: int = 0

    def to_dict(self) -> dict:
        return {
            "cycles_attempted": self.cycles_attempted,
            "cycles_completed": self.cycles_completed,
            "cycles_failed": self.cycles_failed,
            "mean_transmissions_per_cycle": self.mean_transmissions_per_cycle,
            "asymmetric_seals": self.asymmetric_seals,
            "symmetric_seals": self.symmetric_seals,
            "anonymity_colluders": list(self.anonymity_colluders),
            "anonymity_observer": list(self.anonymity_observer),
            "statistical_intersection_mean": self.statistical_intersection_mean,
            "directory_convergence_lag": self.directory_convergence_lag,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Metrics":
        return cls(**data)


class World:
    """Hosts the nodes and drives the event loop (implements NetContext)."""

    def __init__(self, config: ScenarioConfig,
                 responder: Callable[[bytes], bytes] = lambda m: b"ok:" + m):
        self.config = config
        self.responder = responder
        master = Random(config.seed)
        self._rng_nodes = Random(master.getrandbits(64))
        self._rng_churn = Random(master.getrandbits(64))
        self._rng_workload = Random(master.getrandbits(64))
        self._rng_adversary = Random(master.getrandbits(64))

        self._now: Ticks = 0
        self._heap: list = []
        self._seq: dict[PeerId, int] = {}
        self.supernodes: dict[PeerId, SupernodeNode] = {}
        self.peers: dict[PeerId, PeerNode] = {}
        self._next_peer_id = config.n_supernodes + config.n_peers + 1
        self._workload_index = 0
        self._stop_time: Optional[Ticks] = None
        self._settle = max(2 * config.sync_interval, config.heartbeat_timeout + 2)
        per_cycle = (config.retries + 1) * (config.effective_cycle_timeout() + 8) + 20
        self._max_time = (config.workload.start_tick
                          + config.workload.n_cycles * per_cycle
                          + self._settle + 200)
        self._watchdog_span = per_cycle - 4
        self._disagree_since: Optional[Ticks] = None
        self._dir_versions: dict[PeerId, int] = {}

        self.trace = Trace(config.l_req, config.l_resp, config.pad_size,
                           observer_enabled=config.adversary.global_observer)
        self._build_nodes()
        self.trace.colluders = self._resolve_colluders()

    # -- construction -----------------------------------------------------

    def _build_nodes(self) -> None:
        cfg = self.config
        sn_ids = list(range(1, cfg.n_supernodes + 1))
        sn_records = []
        nodes = []
        for sid in sn_ids:
            rng = Random(self._rng_nodes.getrandbits(64))
            node = SupernodeNode(sid, rng, self, cfg.heartbeat_timeout,
                                 cfg.sync_interval, [])
            nodes.append(node)
            sn_records.append(PeerRecord(sid, "sn-%d" % sid, node.public_key, 0))
        for node in nodes:
            node.replicas = {r.peer: r for r in sn_records if r.peer != node.id}
            self.supernodes[node.id] = node
            node.start()
        self._sn_records = sn_records
        for i in range(cfg.n_peers):
            self._spawn_peer(at=0)

    def _spawn_peer(self, at: Ticks) -> PeerNode:
        cfg = self.config
        if at == 0 and len(self.peers) < cfg.n_peers:
            pid = cfg.n_supernodes + 1 + len(self.peers)
        else:
            pid = self._next_peer_id
            self._next_peer_id += 1
        rng = Random(self._rng_nodes.getrandbits(64))
        home = self._sn_records[(pid - cfg.n_supernodes - 1)
                                % cfg.n_supernodes].peer
        node = PeerNode(pid, "peer-%d" % pid, rng, self, self._sn_records, home,
                        l_req=cfg.l_req, l_resp=cfg.l_resp,
                        pad_size=cfg.pad_size,
                        cycle_timeout=cfg.effective_cycle_timeout(),
                        heartbeat_period=cfg.heartbeat_period,
                        retries=cfg.retries,
                        policy=RotationPolicy(cfg.rotate_every),
                        end_to_end=(cfg.response_payload == "end_to_end"),
                        responder=self.responder)
        self.peers[pid] = node
        self.schedule(max(0, at - self._now), pid, node.join)
        return node

    def _resolve_colluders(self) -> frozenset[PeerId]:
        spec = self.config.adversary.colluding
        if isinstance(spec, list):
            return frozenset(spec)
        count = round(float(spec) * self.config.n_peers)
        initial = sorted(self.peers)
        return frozenset(self._rng_adversary.sample(initial, min(count, len(initial))))

    # -- NetContext -------------------------------------------------------

    def now(self) -> Ticks:
        return self._now

    def schedule(self, delay: Ticks, emitter: PeerId, fn: Callable[[], None]) -> None:
        seq = self._seq.get(emitter, 0)
        self._seq[emitter] = seq + 1
        heapq.heappush(self._heap, (self._now + delay, emitter, seq, fn))

    def send(self, src: PeerId, packet: Packet, cycle: Optional[int],
             attempt: int = 0) -> None:
        event = LinkEvent(self._now, src, packet.dest, len(packet.frame),
                          packet.frame_class)
        self.trace.link_events.append(event)
        self.trace.observe(event)
        self.trace.sends += 1
        if cycle is not None and packet.frame_class == FrameClass.DATA:
            self.trace.cycles[cycle].data_events.append(
                len(self.trace.link_events) - 1)
        node = self.supernodes.get(packet.dest) or self.peers.get(packet.dest)
        if node is None or not node.alive:
            self.trace.absorbed += 1
            return

        def deliver(node=node, src=src, packet=packet, cycle=cycle, attempt=attempt):
            self.trace.delivered += 1
            node.handle_frame(src, packet, cycle, attempt)

        self.schedule(1, src, deliver)

    def count_seal(self, scheme: int) -> None:
        if scheme == SCHEME_ASYMMETRIC:
            self.trace.asymmetric_seals += 1
        else:
            self.trace.symmetric_seals += 1

    def count_direct_seal(self, src: PeerId, dst: PeerId, scheme: int) -> None:
        pair = self.trace.direct_seals.setdefault((src, dst), [0, 0])
        pair[0 if scheme == SCHEME_ASYMMETRIC else 1] += 1

    def record_knowledge(self, peer: PeerId, ids: set[PeerId],
                         cycle: Optional[int], context: str) -> None:
        if ids:
            self.trace.knowledge.append(
                KnowledgeEntry(self._now, peer, frozenset(ids), cycle, context))

    def cycle_attempt(self, index: int, attempt: int, cycle_id: bytes,
                      path: DualPath, session_key_id: bytes) -> None:
        self.trace.cycles[index].attempts.append(
            AttemptRecord(attempt, cycle_id, path.request_hops,
                          path.response_hops, session_key_id))

    def cycle_completed(self, index: int, attempt: int) -> None:
        record = self.trace.cycles[index]
        if record.status != PENDING:
            return
        record.status = COMPLETED
        record.completed_attempt = attempt
        record.live_at_completion = frozenset(self.live_peers())
        record.finished = self._now
        self.schedule(1, 0, self._next_cycle)

    def cycle_failed(self, index: int) -> None:
        record = self.trace.cycles[index]
        if record.status != PENDING:
            return
        record.status = FAILED
        record.finished = self._now
        self.schedule(1, 0, self._next_cycle)

    # -- workload, churn, convergence --------------------------------------

    def live_peers(self) -> list[PeerId]:
        return sorted(p for p, n in self.peers.items() if n.alive)

    def _ready_peers(self) -> list[PeerId]:
        return sorted(p for p, n in self.peers.items() if n.alive and n.joined)

    def _next_cycle(self) -> None:
        cfg = self.config
        if self._workload_index >= cfg.workload.n_cycles:
            if self._stop_time is None:
                self._stop_time = self._now + self._settle
            return
        index = self._workload_index
        self._workload_index += 1
        ready = self._ready_peers()
        if cfg.workload.selection == "fixed":
            requester, provider = cfg.workload.requester, cfg.workload.provider
        elif len(ready) >= 2:
            requester, provider = self._rng_workload.sample(ready, 2)
        else:
            requester = provider = None
        record = CycleRecord(index, requester or 0, provider or 0, self._now)
        self.trace.cycles.append(record)
        node = self.peers.get(requester) if requester else None
        if node is None or not node.alive:
            self.cycle_failed(index)
            return
        prefix = ("cycle-%d-" % index).encode()
        pad = max(0, cfg.workload.message_bytes - len(prefix))
        message = prefix + self._rng_workload.randbytes(pad)
        node.start_request(index, provider, message)
        self.schedule(self._watchdog_span, 0,
                      lambda: self._watchdog(index))

    def _watchdog(self, index: int) -> None:
        # Covers requester death while no timer is armed (e.g. between the
        # snapshot refresh and the attempt); normal flows finish long before.
        if self.trace.cycles[index].status == PENDING:
            self.cycle_failed(index)

    def apply_churn(self) -> None:
        """One churn interval: abrupt departures, then fresh joins."""
        cfg = self.config.churn
        for pid in self.live_peers():
            if self._rng_churn.random() < cfg.leave_prob_per_interval:
                # Abrupt departure: no LEAVE signal, heartbeats just stop.
                self.peers[pid].alive = False
        for _ in range(cfg.join_rate):
            self._spawn_peer(at=self._now)

    def _churn_tick(self) -> None:
        self.apply_churn()
        self.schedule(self.config.churn.interval_ticks, 0, self._churn_tick)

    def _check_convergence(self) -> None:
        if len(self.supernodes) < 2:
            return
        changed = False
        for sid, node in self.supernodes.items():
            if self._dir_versions.get(sid) != node.directory.version:
                self._dir_versions[sid] = node.directory.version
                changed = True
        if not changed:
            return
        views = [tuple((p, r.last_heartbeat) for p, r in
                       sorted(node.directory.records.items()))
                 for node in self.supernodes.values()]
        agreed = all(v == views[0] for v in views[1:])
        if not agreed and self._disagree_since is None:
            self._disagree_since = self._now
        elif agreed and self._disagree_since is not None:
            self.trace.convergence_lag = max(self.trace.convergence_lag,
                                             self._now - self._disagree_since)
            self._disagree_since = None

    # -- event loop ---------------------------------------------------------

    def step(self) -> None:
        """Process the minimum-ordered pending event."""
        time, _, _, fn = heapq.heappop(self._heap)
        if time < self._now:
            raise SimulationError("event time went backwards")
        self._now = time
        fn()
        self._check_convergence()

    def run(self) -> None:
        cfg = self.config
        if cfg.churn.leave_prob_per_interval > 0 or cfg.churn.join_rate > 0:
            self.schedule(cfg.churn.interval_ticks, 0, self._churn_tick)
        self.schedule(cfg.workload.start_tick, 0, self._next_cycle)
        while self._heap:
            t = self._heap[0][0]
            if self._stop_time is not None and t > self._stop_time:
                break
            if t > self._max_time:
                raise SimulationError("simulation exceeded its time bound")
            self.step()
        if self._disagree_since is not None:
            self.trace.convergence_lag = max(self.trace.convergence_lag,
                                             self._now - self._disagree_since)
        self.trace.cycles.sort(key=lambda r: r.index)


def run_scenario(config: ScenarioConfig,
                 responder: Callable[[bytes], bytes] = lambda m: b"ok:" + m
                 ) -> tuple[Metrics, Trace]:
    """Run one scenario to completion; deterministic for a given config."""
    from .config import validate
    validate(config)
    world = World(config, responder)
    world.run()
    metrics = compute_metrics(world.trace, config)
    return metrics, world.trace


def compute_metrics(trace: Trace, config: ScenarioConfig) -> Metrics:
    from . import analysis

    m = Metrics()
    m.cycles_attempted = len(trace.cycles)
    m.cycles_completed = sum(1 for c in trace.cycles if c.status == COMPLETED)
    m.cycles_failed = sum(1 for c in trace.cycles if c.status == FAILED)
    m.asymmetric_seals = trace.asymmetric_seals
    m.symmetric_seals = trace.symmetric_seals
    m.directory_convergence_lag = trace.convergence_lag

    transmissions = [len(c.data_events) for c in trace.cycles
                     if c.status == COMPLETED]
    if transmissions:
        m.mean_transmissions_per_cycle = sum(transmissions) / len(transmissions)

    per_requester: dict[PeerId, list[set[PeerId]]] = {}
    for record in trace.cycles:
        if record.status != COMPLETED:
            continue
        content = analysis.colluder_candidates(trace, trace.colluders, record.index)
        full = content
        if trace.observer_enabled:
            full = content & analysis.observer_candidates(trace, record.index)
        m.anonymity_colluders.append(len(content))
        m.anonymity_observer.append(len(full))
        per_requester.setdefault(record.requester, []).append(content)

    intersections = []
    for sets in per_requester.values():
        if len(sets) >= 2:
            common = set.intersection(*sets)
            intersections.append(len(common))
    if intersections:
        m.statistical_intersection_mean = sum(intersections) / len(intersections)
    return m
