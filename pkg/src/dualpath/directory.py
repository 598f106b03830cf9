"""Supernode membership directory.

Tracks live peers through join/leave signals and periodic heartbeats,
evicts peers that fall silent, and merges with replica directories using
last-heartbeat-wins semantics. All mutations are serialized by the caller;
the structure itself is single-threaded.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .envelope import KeyHandle, PeerId

Ticks = int


class DirectoryError(Exception):
    pass


class DuplicateJoinError(DirectoryError):
    """A currently-live peer tried to join again."""


@dataclass(frozen=True)
class PeerRecord:
    peer: PeerId
    address: str
    public_key: KeyHandle
    last_heartbeat: Ticks


@dataclass(frozen=True)
class MembershipDelta:
    """What changed, and who should hear about it."""
    added: frozenset[PeerId] = frozenset()
    removed: frozenset[PeerId] = frozenset()
    recipients: frozenset[PeerId] = frozenset()

    def __bool__(self) -> bool:
        return bool(self.added or self.removed)


EMPTY_DELTA = MembershipDelta()


@dataclass
class Directory:
    heartbeat_timeout: Ticks
    records: dict[PeerId, PeerRecord] = field(default_factory=dict)
    version: int = 0

    def handle_join(self, peer: PeerId, address: str, public_key: KeyHandle,
                    now: Ticks) -> tuple[list[PeerRecord], MembershipDelta]:
        """Register a peer; returns the post-insert snapshot and the delta to
        announce to everyone who was already present."""
        if peer in self.records:
            raise DuplicateJoinError("peer %d is already registered" % peer)
        prior = frozenset(self.records)
        self.records[peer] = PeerRecord(peer, address, public_key, now)
        self.version += 1
        return self.snapshot(), MembershipDelta(added=frozenset({peer}),
                                                recipients=prior)

    def handle_leave(self, peer: PeerId) -> MembershipDelta:
        """Drop a peer if present; unknown peers are a no-op."""
        if peer not in self.records:
            return EMPTY_DELTA
        del self.records[peer]
        self.version += 1
        return MembershipDelta(removed=frozenset({peer}),
                               recipients=frozenset(self.records))

    def handle_heartbeat(self, peer: PeerId, now: Ticks) -> bool:
        """Refresh liveness; returns False for unknown peers (they must
        re-join). Not a membership change, so the version stays put."""
        record = self.records.get(peer)
        if record is None:
            return False
        if now < record.last_heartbeat:
            raise DirectoryError("heartbeat time went backwards for peer %d" % peer)
        self.records[peer] = replace(record, last_heartbeat=now)
        return True

    def evict_expired(self, now: Ticks) -> tuple[set[PeerId], MembershipDelta]:
        """Remove every peer whose silence strictly exceeds the timeout.

        Strict comparison keeps a peer alive when its heartbeat period
        equals the timeout exactly.
        """
        evicted = {p for p, r in self.records.items()
                   if now - r.last_heartbeat > self.heartbeat_timeout}
        if not evicted:
            return set(), EMPTY_DELTA
        for peer in evicted:
            del self.records[peer]
        self.version += 1
        return evicted, MembershipDelta(removed=frozenset(evicted),
                                        recipients=frozenset(self.records))

    def snapshot(self) -> list[PeerRecord]:
        """All live records in PeerId order; never mutates."""
        return [self.records[p] for p in sorted(self.records)]


def merge_directories(local: Directory, remote: Directory) -> Directory:
    """Union of both replicas; on conflict the fresher heartbeat wins.

    Commutative, associative, and idempotent over record sets. The result's
    version moves past the local one only if the merge changed anything.
    """
    if local.heartbeat_timeout != remote.heartbeat_timeout:
        raise DirectoryError("replicas must share one heartbeat timeout")
    merged: dict[PeerId, PeerRecord] = {}
    for peer in sorted(set(local.records) | set(remote.records)):
        a, b = local.records.get(peer), remote.records.get(peer)
        if a is None:
            merged[peer] = b
        elif b is None:
            merged[peer] = a
        else:
            merged[peer] = a if a.last_heartbeat >= b.last_heartbeat else b
    version = max(local.version, remote.version)
    if merged != local.records:
        version += 1
    return Directory(local.heartbeat_timeout, merged, version)
