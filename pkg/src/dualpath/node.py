"""Per-peer protocol state machines.

A peer plays three roles: requester (chooses both relay paths, builds the
onion, retries on timeout), proxy (peels one layer and forwards, or detaches
one return-route tail and re-wraps), and provider (answers the request and
sends the response down the embedded return route). Supernodes run the
membership directory and replicate it to each other.

Direct sends (control traffic and response hop frames) go through the
per-peer key cache: the very first send to a destination is sealed to its
public key and piggybacks the sender's own symmetric key; once both sides
have exchanged keys, everything between them is symmetric. Onion layers and
the return-route layers are always sealed to public keys — using a cached
pairwise key inside an onion would let the hop recognize who built it.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from random import Random
from typing import Callable, Optional, Protocol

from . import envelope as env
from .directory import Directory, DuplicateJoinError, MembershipDelta, PeerRecord
from .envelope import (ANONYMOUS_OWNER, Deliver, FrameClass, KeyHandle,
                       KeyKind, KeyTable, Packet, PayloadKind, PeerId,
                       PlainPayload, ResponseHop, SCHEME_ASYMMETRIC,
                       WrongKeyError, decode_key, encode_key)

Ticks = int


class NotEnoughPeersError(Exception):
    """The membership snapshot cannot supply the requested hop count."""


# ---------------------------------------------------------------------------
# Control plane wire format


class ControlType:
    JOIN = 1
    JOIN_ACK = 2
    LEAVE = 3
    HEARTBEAT = 4
    MEMBER_ADDED = 5
    MEMBER_REMOVED = 6
    LIST_REQUEST = 7
    SYNC = 8


_WITH_RECORDS = (ControlType.JOIN, ControlType.JOIN_ACK,
                 ControlType.MEMBER_ADDED, ControlType.SYNC)


@dataclass(frozen=True)
class ControlMessage:
    ctype: int
    sender: PeerId
    piggyback_key: Optional[KeyHandle] = None
    records: tuple[PeerRecord, ...] = ()
    peer: PeerId = 0  # subject of MEMBER_REMOVED


def _encode_record(r: PeerRecord) -> bytes:
    addr = r.address.encode("utf-8")
    return (r.peer.to_bytes(8, "big") + r.last_heartbeat.to_bytes(8, "big")
            + len(addr).to_bytes(2, "big") + addr + encode_key(r.public_key))


def _decode_record(data: bytes, off: int) -> tuple[PeerRecord, int]:
    peer = int.from_bytes(data[off:off + 8], "big")
    hb = int.from_bytes(data[off + 8:off + 16], "big")
    alen = int.from_bytes(data[off + 16:off + 18], "big")
    off += 18
    addr = data[off:off + alen].decode("utf-8")
    off += alen
    key = decode_key(data[off:off + env.KEY_WIRE_LEN], KeyKind.PUBLIC)
    return PeerRecord(peer, addr, key, hb), off + env.KEY_WIRE_LEN


def encode_control(msg: ControlMessage) -> bytes:
    out = bytearray([msg.ctype])
    out += msg.sender.to_bytes(8, "big")
    if msg.piggyback_key is not None:
        out.append(1)
        out += encode_key(msg.piggyback_key)
    else:
        out.append(0)
    if msg.ctype in _WITH_RECORDS:
        out += len(msg.records).to_bytes(4, "big")
        for r in msg.records:
            out += _encode_record(r)
    elif msg.ctype == ControlType.MEMBER_REMOVED:
        out += msg.peer.to_bytes(8, "big")
    return bytes(out)


def decode_control(data: bytes) -> ControlMessage:
    ctype = data[0]
    sender = int.from_bytes(data[1:9], "big")
    off = 9
    piggy = None
    if data[off]:
        piggy = decode_key(data[off + 1:off + 1 + env.KEY_WIRE_LEN], KeyKind.SYMMETRIC)
        off += env.KEY_WIRE_LEN
    off += 1
    records: list[PeerRecord] = []
    peer = 0
    if ctype in _WITH_RECORDS:
        count = int.from_bytes(data[off:off + 4], "big")
        off += 4
        for _ in range(count):
            record, off = _decode_record(data, off)
            records.append(record)
    elif ctype == ControlType.MEMBER_REMOVED:
        peer = int.from_bytes(data[off:off + 8], "big")
    return ControlMessage(ctype, sender, piggy, tuple(records), peer)


# ---------------------------------------------------------------------------
# Dual paths, sessions, rotation


@dataclass(frozen=True)
class DualPath:
    request_hops: tuple[PeerId, ...]
    response_hops: tuple[PeerId, ...]
    # Private hop budget drawn per path; bounds path length at creation and
    # is never serialized, so there is nothing on the wire to probe.
    ttl_bound: int = 0


@dataclass(frozen=True)
class RotationPolicy:
    rotate_every: int = 1
    rotate_on_failure: bool = True  # fixed true; kept for completeness
    ttl_slack: int = 3              # extra headroom above the minimum budget


def select_dual_path(snapshot: list[PeerRecord], self_id: PeerId,
                     provider: PeerId, l_req: int, l_resp: int,
                     rng: Random, ttl_slack: int = 3) -> DualPath:
    """Draw both relay paths uniformly without replacement from the live
    peers, excluding the requester and the provider. Request and response
    hops never overlap, so no single relay sees both directions."""
    eligible = sorted({r.peer for r in snapshot} - {self_id, provider})
    if len(eligible) < l_req + l_resp:
        raise NotEnoughPeersError(
            "need %d eligible peers, have %d" % (l_req + l_resp, len(eligible)))
    hops = rng.sample(eligible, l_req + l_resp)
    ttl = max(l_req, l_resp) + 1 + rng.randrange(ttl_slack + 1)
    return DualPath(tuple(hops[:l_req]), tuple(hops[l_req:]), ttl)


AWAITING = "awaiting_response"
COMPLETED = "completed"
FAILED = "failed"


@dataclass
class Session:
    cycle_id: bytes
    index: int                   # workload cycle number
    provider: PeerId
    path: DualPath
    session_key: KeyHandle
    transit_keys: list[KeyHandle]
    message: bytes
    state: str = AWAITING
    retries_left: int = 0
    deadline: Ticks = 0
    attempt: int = 0
    cycles_on_current_path: int = 0


def rotation_due(policy: RotationPolicy, session: Session) -> bool:
    """A fresh dual path is due after rotate_every completed cycles, or
    immediately after any failure."""
    if policy.rotate_on_failure and session.state == FAILED:
        return True
    return session.cycles_on_current_path >= policy.rotate_every


@dataclass
class _PathUse:
    path: DualPath
    completed_cycles: int = 0
    failed: bool = False


@dataclass
class _Intent:
    index: int
    provider: PeerId
    message: bytes
    retries_left: int
    attempt: int = 0


class NetContext(Protocol):
    """What an actor needs from its host (the simulator implements this)."""

    def now(self) -> Ticks: ...
    def send(self, src: PeerId, packet: Packet, cycle: Optional[int],
             attempt: int = 0) -> None: ...
    def schedule(self, delay: Ticks, emitter: PeerId,
                 fn: Callable[[], None]) -> None: ...
    def count_seal(self, scheme: int) -> None: ...
    def count_direct_seal(self, src: PeerId, dst: PeerId, scheme: int) -> None: ...
    def record_knowledge(self, peer: PeerId, ids: set[PeerId],
                         cycle: Optional[int], context: str) -> None: ...
    def cycle_attempt(self, index: int, attempt: int, cycle_id: bytes,
                      path: DualPath, session_key_id: bytes) -> None: ...
    def cycle_completed(self, index: int, attempt: int) -> None: ...
    def cycle_failed(self, index: int) -> None: ...


class _KeyedActor:
    """Shared key-cache behaviour for peers and supernodes."""

    def __init__(self, node_id: PeerId, rng: Random, ctx: NetContext):
        self.id = node_id
        self.rng = rng
        self.ctx = ctx
        self.public_key, self.private_key = env.new_keypair(node_id, rng)
        self.key_table = KeyTable(env.new_symmetric_key(node_id, rng))
        self.sent_to: set[PeerId] = set()
        self.alive = True

    def opening_keys(self) -> list[KeyHandle]:
        """Keys tried against incoming frames: our private and own symmetric
        keys, plus every cached sender key from the table."""
        return ([self.private_key, self.key_table.own_symmetric]
                + list(self.key_table.entries.values()))

    def _direct_choice(self, dst: PeerId, dst_public: KeyHandle) -> env.SchemeChoice:
        # The first send to any destination is asymmetric and piggybacks our
        # own symmetric key; every later send runs symmetric, either with
        # the destination's cached key or, when the contact has been
        # one-directional so far, with our own key (the destination holds
        # it from the first frame's piggyback).
        if dst not in self.sent_to:
            self.sent_to.add(dst)
            return env.SchemeChoice(SCHEME_ASYMMETRIC, dst_public,
                                    self.key_table.own_symmetric)
        cached = self.key_table.entries.get(dst)
        if cached is not None:
            return env.SchemeChoice(env.SCHEME_SYMMETRIC, cached, None)
        return env.SchemeChoice(env.SCHEME_SYMMETRIC,
                                self.key_table.own_symmetric, None)

    def _record_piggyback(self, sender: PeerId, key: Optional[KeyHandle]):
        if key is not None and key.owner == sender and sender != self.id:
            env.record_piggybacked_key(self.key_table, sender, key)

    def _send_control(self, dst: PeerId, dst_public: KeyHandle,
                      msg: ControlMessage) -> None:
        choice = self._direct_choice(dst, dst_public)
        msg = ControlMessage(msg.ctype, msg.sender, choice.piggyback,
                             msg.records, msg.peer)
        blob = env.seal(choice.key, encode_control(msg), self.ctx.count_seal)
        self.ctx.count_direct_seal(self.id, dst, choice.scheme)
        packet = Packet(dst, FrameClass.CONTROL, env.encode_frame(blob, None))
        self.ctx.send(self.id, packet, None)


# ---------------------------------------------------------------------------
# Peer


class PeerNode(_KeyedActor):
    def __init__(self, node_id: PeerId, address: str, rng: Random,
                 ctx: NetContext, supernodes: list[PeerRecord],
                 home: PeerId, *, l_req: int, l_resp: int, pad_size: int,
                 cycle_timeout: Ticks, heartbeat_period: Ticks,
                 retries: int, policy: RotationPolicy,
                 end_to_end: bool = True,
                 responder: Callable[[bytes], bytes] = lambda m: b"ok:" + m):
        super().__init__(node_id, rng, ctx)
        self.address = address
        self.supernodes = {r.peer: r for r in supernodes}
        self.home = home
        self.l_req = l_req
        self.l_resp = l_resp
        self.pad_size = pad_size
        self.cycle_timeout = cycle_timeout
        self.heartbeat_period = heartbeat_period
        self.retries = retries
        self.policy = policy
        self.end_to_end = end_to_end
        self.responder = responder
        self.view: dict[PeerId, PeerRecord] = {}
        self.joined = False
        self.last_response: Optional[bytes] = None
        self._pending: deque[_Intent] = deque()
        self._sessions: dict[bytes, Session] = {}
        self._by_session_key: dict[bytes, Session] = {}
        self._paths: dict[PeerId, _PathUse] = {}

    # -- membership -------------------------------------------------------

    def join(self) -> None:
        record = PeerRecord(self.id, self.address, self.public_key, 0)
        self._send_control(self.home, self.supernodes[self.home].public_key,
                           ControlMessage(ControlType.JOIN, self.id,
                                          records=(record,)))

    def leave(self) -> None:
        self._send_control(self.home, self.supernodes[self.home].public_key,
                           ControlMessage(ControlType.LEAVE, self.id))
        self.alive = False

    def _heartbeat(self) -> None:
        # Liveness goes to every supernode: each replica keeps its own fresh
        # timestamps, so replication lag can never look like silence.
        if not self.alive:
            return
        for sid in sorted(self.supernodes):
            self._send_control(sid, self.supernodes[sid].public_key,
                               ControlMessage(ControlType.HEARTBEAT, self.id))
        self.ctx.schedule(self.heartbeat_period, self.id, self._heartbeat)

    def request_snapshot(self) -> None:
        self._send_control(self.home, self.supernodes[self.home].public_key,
                           ControlMessage(ControlType.LIST_REQUEST, self.id))

    # -- requester --------------------------------------------------------

    def start_request(self, index: int, provider: PeerId, message: bytes) -> None:
        """Begin one workload cycle; the path is drawn from a snapshot
        refreshed at selection time."""
        self._pending.append(_Intent(index, provider, message, self.retries))
        self.request_snapshot()

    def _choose_path(self, provider: PeerId, snapshot: list[PeerRecord]) -> DualPath:
        use = self._paths.get(provider)
        if use is not None:
            stale = any(hop not in self.view for hop in
                        use.path.request_hops + use.path.response_hops)
            due = (use.failed if self.policy.rotate_on_failure else False) \
                or use.completed_cycles >= self.policy.rotate_every
            if not stale and not due:
                return use.path
        path = select_dual_path(snapshot, self.id, provider,
                                self.l_req, self.l_resp, self.rng,
                                self.policy.ttl_slack)
        self._paths[provider] = _PathUse(path)
        return path

    def _attempt(self, intent: _Intent) -> None:
        if not self.alive:
            return
        snapshot = [self.view[p] for p in sorted(self.view)]
        provider_rec = self.view.get(intent.provider)
        try:
            if provider_rec is None:
                raise NotEnoughPeersError("provider %d not in view" % intent.provider)
            path = self._choose_path(intent.provider, snapshot)
        except NotEnoughPeersError:
            self._retry_or_fail(intent)
            return
        session_key = env.new_symmetric_key(ANONYMOUS_OWNER, self.rng)
        transit = [env.new_symmetric_key(ANONYMOUS_OWNER, self.rng)
                   for _ in path.response_hops]
        cycle_id = self.rng.randbytes(8)
        keys = {p: r.public_key for p, r in self.view.items()}
        keys[self.id] = self.public_key
        rblock = env.build_response_block(list(path.response_hops), self.id,
                                          keys, session_key, transit,
                                          self.ctx.count_seal)
        payload = PlainPayload(intent.message, PayloadKind.REQUEST,
                               session_key if self.end_to_end else None)
        packet = env.build_request_onion(list(path.request_hops),
                                         intent.provider, payload, rblock,
                                         keys, self.pad_size, self.ctx.count_seal)
        session = Session(cycle_id, intent.index, intent.provider, path,
                          session_key, transit, intent.message,
                          retries_left=intent.retries_left,
                          deadline=self.ctx.now() + self.cycle_timeout,
                          attempt=intent.attempt)
        self._sessions[cycle_id] = session
        self._by_session_key[session_key.key_id] = session
        self.ctx.cycle_attempt(intent.index, intent.attempt, cycle_id, path,
                               session_key.key_id)
        self.ctx.send(self.id, packet, intent.index, intent.attempt)
        self.ctx.schedule(self.cycle_timeout, self.id,
                          lambda: self._on_timeout(cycle_id))

    def _retry_or_fail(self, intent: _Intent) -> None:
        if intent.retries_left > 0 and self.alive:
            use = self._paths.get(intent.provider)
            if use is not None:
                use.failed = True
            self._pending.append(_Intent(intent.index, intent.provider,
                                         intent.message,
                                         intent.retries_left - 1,
                                         intent.attempt + 1))
            self.request_snapshot()
        else:
            self.ctx.cycle_failed(intent.index)

    def _on_timeout(self, cycle_id: bytes) -> None:
        session = self._sessions.get(cycle_id)
        if session is None or session.state != AWAITING:
            return  # response already arrived, or attempt superseded
        session.state = FAILED
        del self._sessions[cycle_id]
        self._by_session_key.pop(session.session_key.key_id, None)
        self._retry_or_fail(_Intent(session.index, session.provider,
                                    session.message, session.retries_left,
                                    session.attempt))

    # -- frame handling ---------------------------------------------------

    def handle_frame(self, src: PeerId, packet: Packet,
                     cycle: Optional[int], attempt: int = 0) -> None:
        if not self.alive:
            return
        try:
            if packet.frame_class == FrameClass.CONTROL:
                self._handle_control(src, packet)
            else:
                self._handle_data(src, packet, cycle, attempt)
        except WrongKeyError:
            pass  # silent drop: a failed open never produces a reply

    def _handle_control(self, src: PeerId, packet: Packet) -> None:
        body = env.open_with_any(self.own_keys(), env.decode_frame(packet.frame))
        msg = decode_control(body)
        self._record_piggyback(msg.sender, msg.piggyback_key)
        if msg.ctype == ControlType.JOIN_ACK:
            for r in msg.records:
                self.view[r.peer] = r
            self.ctx.record_knowledge(self.id, {r.peer for r in msg.records},
                                      None, "membership")
            if not self.joined:
                self.joined = True
                self.ctx.schedule(self.heartbeat_period, self.id, self._heartbeat)
            if self._pending:
                self._attempt(self._pending.popleft())
        elif msg.ctype == ControlType.MEMBER_ADDED:
            for r in msg.records:
                self.view[r.peer] = r
            self.ctx.record_knowledge(self.id, {r.peer for r in msg.records},
                                      None, "membership")
        elif msg.ctype == ControlType.MEMBER_REMOVED:
            self.view.pop(msg.peer, None)
            self.ctx.record_knowledge(self.id, {msg.peer}, None, "membership")

    def _handle_data(self, src: PeerId, packet: Packet,
                     cycle: Optional[int], attempt: int) -> None:
        if packet.dest != self.id:
            raise WrongKeyError("frame not addressed to this peer")
        body = env.open_with_any(self.own_keys(), env.decode_frame(packet.frame))
        step = env.parse_data_body(body)
        if isinstance(step, ResponseHop):
            self._handle_response_hop(src, step, cycle, attempt)
        elif isinstance(step, env.RelayStep):
            inner = env.encode_frame(step.blob, len(packet.frame))
            self.ctx.record_knowledge(self.id, {step.next_peer}, cycle, "peel")
            self.ctx.send(self.id,
                          Packet(step.next_peer, FrameClass.DATA, inner),
                          cycle, attempt)
        else:
            if step.payload.kind != PayloadKind.REQUEST or step.rblock is None:
                raise WrongKeyError("unexpected innermost layer")
            self._handle_provider(step, cycle, attempt)

    def _handle_provider(self, deliver: Deliver, cycle: Optional[int],
                         attempt: int) -> None:
        rblock = deliver.rblock
        self.ctx.record_knowledge(self.id, {rblock.next_peer}, cycle, "deliver")
        response = self.responder(deliver.payload.body)
        if self.end_to_end:
            if deliver.payload.piggyback_key is None:
                raise WrongKeyError("request carries no session key")
            content = env.encode_blob(
                env.seal(deliver.payload.piggyback_key, response,
                         self.ctx.count_seal))
        else:
            content = response
        self._send_response_hop(rblock.next_peer, content, rblock.tail,
                                cycle, attempt)

    def _send_response_hop(self, dst: PeerId, content: bytes,
                           tail, cycle: Optional[int], attempt: int) -> None:
        record = self.view.get(dst)
        if record is None:
            raise WrongKeyError("next response hop %d unknown" % dst)
        choice = self._direct_choice(dst, record.public_key)
        packet = env.wrap_response(content, choice.key, tail, self.pad_size,
                                   piggyback=choice.piggyback,
                                   on_seal=self.ctx.count_seal)
        self.ctx.count_direct_seal(self.id, dst, choice.scheme)
        self.ctx.send(self.id, packet, cycle, attempt)

    def _handle_response_hop(self, src: PeerId, hop: ResponseHop,
                             cycle: Optional[int], attempt: int) -> None:
        self._record_piggyback(src, hop.piggyback_key)
        if hop.tail is None:
            raise WrongKeyError("response frame without a return layer")
        layer = env.open_response_block(hop.tail, [self.private_key])
        if layer.tail is None and layer.next_peer == self.id:
            # Terminal layer: only the requester ever sees it.
            self._complete_cycle(layer.transit_key, hop.content)
            return
        self.ctx.record_knowledge(self.id, {layer.next_peer}, cycle, "tail")
        content = hop.content
        if self.end_to_end:
            content = env.apply_transit(layer.transit_key, content)
        self._send_response_hop(layer.next_peer, content, layer.tail,
                                cycle, attempt)

    def _complete_cycle(self, session_key: KeyHandle, content: bytes) -> None:
        session = self._by_session_key.get(session_key.key_id)
        if session is None or session.state != AWAITING:
            return  # superseded attempt; drop
        if self.end_to_end:
            content = env.strip_transit(session.transit_keys, content)
            response = env.open_blob(session.session_key, env.decode_blob(content))
        else:
            response = content
        session.state = COMPLETED
        del self._sessions[session.cycle_id]
        del self._by_session_key[session.session_key.key_id]
        use = self._paths.get(session.provider)
        if use is not None:
            use.completed_cycles += 1
            use.failed = False
        self.last_response = response
        self.ctx.cycle_completed(session.index, session.attempt)


# ---------------------------------------------------------------------------
# Supernode


class SupernodeNode(_KeyedActor):
    def __init__(self, node_id: PeerId, rng: Random, ctx: NetContext,
                 heartbeat_timeout: Ticks, sync_interval: Ticks,
                 peers_of: list[PeerRecord]):
        super().__init__(node_id, rng, ctx)
        self.directory = Directory(heartbeat_timeout)
        self.sync_interval = sync_interval
        self.replicas = {r.peer: r for r in peers_of if r.peer != node_id}
        self.home_peers: set[PeerId] = set()

    def start(self) -> None:
        self.ctx.schedule(1, self.id, self._evict_tick)
        # First sync runs right after the bootstrap joins settle so every
        # replica serves a complete view from the start.
        self.ctx.schedule(min(2, self.sync_interval), self.id, self._sync_tick)

    # -- timers -----------------------------------------------------------

    def _evict_tick(self) -> None:
        evicted, delta = self.directory.evict_expired(self.ctx.now())
        self.home_peers -= evicted
        if evicted:
            self._broadcast_delta(delta)
        self.ctx.schedule(1, self.id, self._evict_tick)

    def _sync_tick(self) -> None:
        snapshot = tuple(self.directory.snapshot())
        for rid in sorted(self.replicas):
            self._send_control(rid, self.replicas[rid].public_key,
                               ControlMessage(ControlType.SYNC, self.id,
                                              records=snapshot))
        self.ctx.schedule(self.sync_interval, self.id, self._sync_tick)

    # -- frame handling ---------------------------------------------------

    def handle_frame(self, src: PeerId, packet: Packet,
                     cycle: Optional[int], attempt: int = 0) -> None:
        try:
            body = env.open_with_any(self.own_keys(), env.decode_frame(packet.frame))
            msg = decode_control(body)
        except WrongKeyError:
            return
        self._record_piggyback(msg.sender, msg.piggyback_key)
        if msg.ctype == ControlType.JOIN:
            self._on_join(msg)
        elif msg.ctype == ControlType.LEAVE:
            delta = self.directory.handle_leave(msg.sender)
            self.home_peers.discard(msg.sender)
            self._broadcast_delta(delta)
        elif msg.ctype == ControlType.HEARTBEAT:
            self.directory.handle_heartbeat(msg.sender, self.ctx.now())
        elif msg.ctype == ControlType.LIST_REQUEST:
            self._reply_snapshot(msg.sender)
        elif msg.ctype == ControlType.SYNC:
            self._on_sync(msg)

    def _on_join(self, msg: ControlMessage) -> None:
        if not msg.records:
            return
        record = msg.records[0]
        try:
            snapshot, delta = self.directory.handle_join(
                msg.sender, record.address, record.public_key, self.ctx.now())
        except DuplicateJoinError:
            return
        self.home_peers.add(msg.sender)
        self._send_control(msg.sender, record.public_key,
                           ControlMessage(ControlType.JOIN_ACK, self.id,
                                          records=tuple(snapshot)))
        self._broadcast_delta(delta)

    def _reply_snapshot(self, dst: PeerId) -> None:
        record = self.directory.records.get(dst)
        if record is None:
            return  # not a member; it must join first
        self._send_control(dst, record.public_key,
                           ControlMessage(ControlType.JOIN_ACK, self.id,
                                          records=tuple(self.directory.snapshot())))

    def _on_sync(self, msg: ControlMessage) -> None:
        from .directory import merge_directories
        remote = Directory(self.directory.heartbeat_timeout,
                           {r.peer: r for r in msg.records})
        before = {p: r.last_heartbeat for p, r in self.directory.records.items()}
        self.directory = merge_directories(self.directory, remote)
        added = [self.directory.records[p]
                 for p in sorted(set(self.directory.records) - set(before))]
        # Replicated joins are announced to this supernode's own peers;
        # removals propagate when this replica's own eviction clock fires.
        for record in added:
            self._broadcast(ControlMessage(ControlType.MEMBER_ADDED, self.id,
                                           records=(record,)),
                            exclude={record.peer})

    # -- helpers ----------------------------------------------------------

    def _broadcast_delta(self, delta: MembershipDelta) -> None:
        for peer in sorted(delta.added):
            record = self.directory.records[peer]
            self._broadcast(ControlMessage(ControlType.MEMBER_ADDED, self.id,
                                           records=(record,)), exclude={peer})
        for peer in sorted(delta.removed):
            self._broadcast(ControlMessage(ControlType.MEMBER_REMOVED, self.id,
                                           peer=peer), exclude={peer})

    def _broadcast(self, msg: ControlMessage, exclude: set[PeerId]) -> None:
        for peer in sorted(self.home_peers - exclude):
            record = self.directory.records.get(peer)
            if record is None:
                continue
            self._send_control(peer, record.public_key, msg)
