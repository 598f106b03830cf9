"""Adversary analysis: who could be a cycle's requester?

Knowledge model (content-based). A colluding node contributes exactly what
it decrypted during a cycle plus the raw frames that passed through its
hands; it does not contribute transport metadata, and a sealed blob is
opaque without its key. Two colluders can pool their observations only if
they can prove the observations belong to the same cycle, which requires
shared content: consecutive participants of the relay chain share frame
bytes (what one sent is exactly what the next received, or what the
provider built), while participants separated by an honest hop see
unrelated ciphertexts - the honest hop re-seals, re-pads or re-encrypts
everything it forwards. Colluders therefore pool into clusters: maximal
consecutive colluding runs of the chain

    request_hops ++ [provider] ++ response_hops.

Each cluster member knows its own role (request relay, provider, response
relay: the decrypted body shapes differ) and the id of its successor (the
peel target, the first return hop, or the return layer's next peer), but
never its position along its path: frames carry no hop counter, and the
return route's terminal layer opens only for the requester itself.

For a single cluster, candidate requesters come from sliding the run over
every role-compatible position range of a hypothetical cycle with the same
configured path lengths. A placement that puts the run's last member at the
end of the response path forces the requester to be that member's observed
successor; every other placement leaves the requester free among live peers
that are neither colluders nor forced into relay slots by the run's own
facts. Uninvolved colluders can never fill a slot of the hypothetical cycle
(they would have observed something they did not), and no colluder is ever
a candidate (each knows its own activity).

Distinct clusters of one cycle cannot prove they belong together, so their
sets are not intersected; the analysis reports the sharpest single
cluster's set (smallest, ties broken by members). With no cluster at all
every live non-colluding peer is a candidate. The true requester is a
member of every set this module produces.

The global observer adds transport metadata: every link event. Its
candidate origins for a completed cycle come from walking observed DATA
events backward from the cycle's final delivery, exactly chain-length
steps, branching wherever several frames could have been the predecessor.
An uninterleaved cycle is pinned uniquely this way; that traffic-analysis
gap is reported as a metric, never asserted away.
"""

from __future__ import annotations

from collections import defaultdict
from typing import Iterable

from .envelope import FrameClass, PeerId
from .simnet import COMPLETED, CycleRecord, Trace


def _completed_record(trace: Trace, cycle: int) -> CycleRecord:
    if cycle < 0 or cycle >= len(trace.cycles):
        raise ValueError("unknown cycle %d" % cycle)
    record = trace.cycles[cycle]
    if record.status != COMPLETED:
        raise ValueError("cycle %d did not complete" % cycle)
    return record


def cycle_chain(trace: Trace, cycle: int) -> list[PeerId]:
    """The completing attempt's relay chain: request hops, provider,
    response hops (requester excluded)."""
    record = _completed_record(trace, cycle)
    attempt = next(a for a in record.attempts
                   if a.attempt == record.completed_attempt)
    return (list(attempt.request_hops) + [record.provider]
            + list(attempt.response_hops))


def _clusters(chain: list[PeerId], colluding: frozenset[PeerId]) -> list[tuple[int, int]]:
    spans = []
    start = None
    for i, peer in enumerate(chain):
        if peer in colluding:
            if start is None:
                start = i
        elif start is not None:
            spans.append((start, i - 1))
            start = None
    if start is not None:
        spans.append((start, len(chain) - 1))
    return spans


def _cluster_candidates(chain: list[PeerId], l_req: int, l_resp: int,
                        span: tuple[int, int], live: frozenset[PeerId],
                        colluding: frozenset[PeerId],
                        requester: PeerId) -> set[PeerId]:
    a, b = span
    chain_len = len(chain)
    size = b - a + 1
    members = set(chain[a:b + 1])
    external_next = chain[b + 1] if b + 1 < chain_len else requester
    if a <= l_req <= b:
        starts: Iterable[int] = (a,)  # provider inside: absolutely anchored
    elif b < l_req:
        starts = range(0, l_req - size + 1)
    else:
        starts = range(l_req + 1, l_req + 1 + l_resp - size + 1)
    uninvolved = colluding - set(chain)
    # Relay slots may be filled by anyone who existed during the cycle,
    # including participants that departed before it completed; candidate
    # requesters themselves must be alive (they just received the reply).
    population = live | set(chain)
    pool_base = population - uninvolved  # involved colluders may fill honest slots
    candidates: set[PeerId] = set()
    for start in starts:
        end = start + size - 1
        if end == chain_len - 1:
            # Run reaches the response path's end: its successor is the
            # requester of this hypothetical cycle.
            pinned = external_next
            if pinned in colluding or pinned not in live:
                continue
            pool = pool_base - members - {pinned}
            if len(pool) >= chain_len - size:
                candidates.add(pinned)
        else:
            forced = members | {external_next}
            pool = pool_base - forced
            free = (live - colluding) - forced
            remaining = chain_len - size - 1  # slots besides run + successor
            for peer in free:
                if len(pool - {peer}) >= remaining:
                    candidates.add(peer)
    return candidates


def colluder_candidates(trace: Trace, colluding: Iterable[PeerId],
                        cycle: int) -> set[PeerId]:
    """Peers consistent with having requested ``cycle`` given only the
    colluders' decrypted views (no transport metadata)."""
    record = _completed_record(trace, cycle)
    colluding = frozenset(colluding)
    requester = record.requester
    live = frozenset(record.live_at_completion)
    if requester in colluding:
        return {requester}
    chain = cycle_chain(trace, cycle)
    spans = _clusters(chain, colluding)
    if not spans:
        return set(live - colluding)
    sets = [_cluster_candidates(chain, trace.l_req, trace.l_resp, span,
                                live, colluding, requester)
            for span in spans]
    return set(min(sets, key=lambda s: (len(s), tuple(sorted(s)))))


def observer_candidates(trace: Trace, cycle: int) -> set[PeerId]:
    """Chain origins consistent with the observer's link log.

    Walks backward from the cycle's final delivery over observed DATA
    events for exactly chain-length steps; every unit-latency predecessor
    is a possible branch. Returns all live peers when the observer is off.
    """
    record = _completed_record(trace, cycle)
    if not trace.observer_enabled:
        return set(record.live_at_completion)
    chain_len = trace.l_req + trace.l_resp + 2
    preds = defaultdict(list)
    for e in trace.observer_log:
        if e.frame_class == FrameClass.DATA:
            preds[(e.dst, e.time)].append(e)
    final = trace.link_events[record.data_events[-1]]
    frontier = {final}
    for _ in range(chain_len - 1):
        frontier = {p for e in frontier for p in preds.get((e.src, e.time - 1), ())}
    return {e.src for e in frontier}


def linkability_analysis(trace: Trace, colluding: Iterable[PeerId],
                         cycle: int) -> set[PeerId]:
    """Candidate requesters for a completed cycle, combining the colluders'
    decrypted views with the global observer's link metadata when the
    scenario enabled one. The true requester is always a member."""
    candidates = colluder_candidates(trace, colluding, cycle)
    if trace.observer_enabled:
        candidates &= observer_candidates(trace, cycle)
    return candidates


def peers_knowing_requester(trace: Trace, cycle: int) -> set[PeerId]:
    """Every peer whose cycle-scoped decrypted knowledge contains the
    requester's id (membership gossip excluded: that is control-plane
    knowledge shared by everyone)."""
    record = _completed_record(trace, cycle)
    return {k.peer for k in trace.knowledge
            if k.cycle == cycle and record.requester in k.ids
            and k.peer != record.requester}
