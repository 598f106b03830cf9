"""Layered envelopes for the dual-path relay protocol.

Wire layout of a sealed layer (integers big-endian):

    [scheme 1][key id 8][body length 4][body ...]

DATA frames are zero-padded to a fixed ``pad_size`` so every relayed
message has the same observable length on every link; CONTROL frames
travel unpadded. A relay layer of a request opens to
``[next peer 8][inner layer]``; the innermost layer opens to

    [payload kind 1][key flag 1][key 40?][message len 4][message]
    [response block len 4][response block]

The response block is a nested chain of layers, one per return hop plus a
terminal layer only the requester can open. Each layer yields the next
peer to forward to, a transit key used to re-encrypt the response content
on that hop, and the remaining (still sealed) tail.

Keys carry their raw material so the whole scheme stays deterministic and
dependency-free: sealing is a keyed stream XOR plus an integrity tag. That
is NOT a real cipher; it enforces the sealing contract structurally
(matching key id and kind, detectable tampering, length concealment up to
a 32-byte granule) which is exactly what the simulator and the adversary
model rely on. A real hybrid scheme can be slotted in behind ``seal`` and
``open_blob`` without touching callers.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from enum import IntEnum
from random import Random
from typing import Callable, Iterable, Mapping, Optional, Union

PeerId = int

KEY_ID_LEN = 8
KEY_SECRET_LEN = 24
KEY_WIRE_LEN = 8 + KEY_ID_LEN + KEY_SECRET_LEN  # owner + id + secret
SEAL_GRANULE = 32
TAG_LEN = 16
LAYER_HEADER_LEN = 1 + KEY_ID_LEN + 4

SCHEME_ASYMMETRIC = 1
SCHEME_SYMMETRIC = 2

# Owner id 0 marks unattributed key material (per-cycle session and transit
# keys); it never collides with real peers, whose ids start at 1.
ANONYMOUS_OWNER = 0


class EnvelopeError(Exception):
    """Base class for sealing/wrapping failures."""


class WrongKeyError(EnvelopeError):
    """The blob does not open with the offered key (or was tampered with)."""


class InvalidKeyUseError(EnvelopeError):
    """A key was used in a role its kind does not allow."""


class UnknownKeyError(EnvelopeError):
    """No key material available for a peer that needs one."""


class PayloadTooLargeError(EnvelopeError):
    """Serialized content does not fit the configured frame size."""


class KeyKind(IntEnum):
    PUBLIC = 1
    PRIVATE = 2
    SYMMETRIC = 3


class FrameClass(IntEnum):
    DATA = 1
    CONTROL = 2


class PayloadKind(IntEnum):
    REQUEST = 1
    RESPONSE = 2


@dataclass(frozen=True)
class KeyHandle:
    kind: KeyKind
    owner: PeerId
    key_id: bytes
    secret: bytes

    def __post_init__(self):
        if len(self.key_id) != KEY_ID_LEN:
            raise ValueError("key id must be %d bytes" % KEY_ID_LEN)
        if len(self.secret) != KEY_SECRET_LEN:
            raise ValueError("key secret must be %d bytes" % KEY_SECRET_LEN)


def new_keypair(owner: PeerId, rng: Random) -> tuple[KeyHandle, KeyHandle]:
    """Generate a public/private pair sharing one key id."""
    key_id = rng.randbytes(KEY_ID_LEN)
    secret = rng.randbytes(KEY_SECRET_LEN)
    pub = KeyHandle(KeyKind.PUBLIC, owner, key_id, secret)
    priv = KeyHandle(KeyKind.PRIVATE, owner, key_id, secret)
    return pub, priv


def new_symmetric_key(owner: PeerId, rng: Random) -> KeyHandle:
    return KeyHandle(KeyKind.SYMMETRIC, owner, rng.randbytes(KEY_ID_LEN),
                     rng.randbytes(KEY_SECRET_LEN))


def encode_key(key: KeyHandle) -> bytes:
    return key.owner.to_bytes(8, "big") + key.key_id + key.secret


def decode_key(data: bytes, kind: KeyKind) -> KeyHandle:
    if len(data) != KEY_WIRE_LEN:
        raise WrongKeyError("malformed key material")
    owner = int.from_bytes(data[:8], "big")
    return KeyHandle(kind, owner, data[8:8 + KEY_ID_LEN], data[8 + KEY_ID_LEN:])


# ---------------------------------------------------------------------------
# Sealing primitive


def _keystream(secret: bytes, length: int) -> bytes:
    out = bytearray()
    counter = 0
    while len(out) < length:
        out += hashlib.sha256(secret + counter.to_bytes(8, "big")).digest()
        counter += 1
    return bytes(out[:length])


def _tag(secret: bytes, plaintext: bytes) -> bytes:
    return hashlib.sha256(b"seal-tag" + secret + plaintext).digest()[:TAG_LEN]


class StreamTestCipher:
    """Deterministic stand-in cipher: length framing, XOR stream, MAC-style tag.

    The ciphertext length depends only on the plaintext length (rounded up
    to SEAL_GRANULE), never on its content.
    """

    def body_length(self, plaintext_len: int) -> int:
        padded = 4 + plaintext_len
        padded += (-padded) % SEAL_GRANULE
        return TAG_LEN + padded

    def encrypt(self, secret: bytes, plaintext: bytes) -> bytes:
        framed = len(plaintext).to_bytes(4, "big") + plaintext
        framed += b"\x00" * ((-len(framed)) % SEAL_GRANULE)
        return _tag(secret, plaintext) + bytes(
            a ^ b for a, b in zip(framed, _keystream(secret, len(framed))))

    def decrypt(self, secret: bytes, body: bytes) -> bytes:
        if len(body) < TAG_LEN + 4:
            raise WrongKeyError("sealed body too short")
        tag, ct = body[:TAG_LEN], body[TAG_LEN:]
        framed = bytes(a ^ b for a, b in zip(ct, _keystream(secret, len(ct))))
        n = int.from_bytes(framed[:4], "big")
        if n > len(framed) - 4:
            raise WrongKeyError("sealed body does not open")
        plaintext = framed[4:4 + n]
        if _tag(secret, plaintext) != tag:
            raise WrongKeyError("integrity check failed")
        return plaintext


CIPHER = StreamTestCipher()

# Optional hook for instrumented builds: called as on_seal(scheme) for every
# seal performed, including the ones inside onion/response-block builders.
SealHook = Callable[[int], None]


@dataclass(frozen=True)
class SealedBlob:
    scheme: int
    key_id: bytes
    body: bytes


def seal(key: KeyHandle, plaintext: bytes, on_seal: Optional[SealHook] = None) -> SealedBlob:
    if key.kind == KeyKind.PRIVATE:
        raise InvalidKeyUseError("private handles only open, never seal")
    scheme = SCHEME_SYMMETRIC if key.kind == KeyKind.SYMMETRIC else SCHEME_ASYMMETRIC
    if on_seal is not None:
        on_seal(scheme)
    return SealedBlob(scheme, key.key_id, CIPHER.encrypt(key.secret, plaintext))


def open_blob(key: KeyHandle, blob: SealedBlob) -> bytes:
    if key.kind == KeyKind.PUBLIC:
        raise WrongKeyError("public handles cannot open")
    if key.key_id != blob.key_id:
        raise WrongKeyError("key id mismatch")
    if blob.scheme == SCHEME_ASYMMETRIC and key.kind != KeyKind.PRIVATE:
        raise WrongKeyError("scheme/kind mismatch")
    if blob.scheme == SCHEME_SYMMETRIC and key.kind != KeyKind.SYMMETRIC:
        raise WrongKeyError("scheme/kind mismatch")
    return CIPHER.decrypt(key.secret, blob.body)


def open_with_any(keys: Iterable[KeyHandle], blob: SealedBlob) -> bytes:
    for key in keys:
        if key.key_id == blob.key_id and key.kind != KeyKind.PUBLIC:
            return open_blob(key, blob)
    raise WrongKeyError("no matching key")


# ---------------------------------------------------------------------------
# Layer and frame serialization


def encode_blob(blob: SealedBlob) -> bytes:
    return (bytes([blob.scheme]) + blob.key_id
            + len(blob.body).to_bytes(4, "big") + blob.body)


def decode_blob(data: bytes, exact: bool = True) -> SealedBlob:
    """Parse a serialized layer; with exact=True the input must be consumed
    entirely (trailing zero padding excepted for frames, see decode_frame)."""
    if len(data) < LAYER_HEADER_LEN:
        raise WrongKeyError("truncated layer")
    scheme = data[0]
    if scheme not in (SCHEME_ASYMMETRIC, SCHEME_SYMMETRIC):
        raise WrongKeyError("unknown sealing scheme")
    key_id = data[1:1 + KEY_ID_LEN]
    n = int.from_bytes(data[1 + KEY_ID_LEN:LAYER_HEADER_LEN], "big")
    body = data[LAYER_HEADER_LEN:LAYER_HEADER_LEN + n]
    if len(body) != n:
        raise WrongKeyError("truncated layer body")
    if exact and LAYER_HEADER_LEN + n != len(data):
        raise WrongKeyError("trailing bytes after layer")
    return SealedBlob(scheme, key_id, body)


def encode_frame(blob: SealedBlob, pad_size: Optional[int]) -> bytes:
    """Serialize a layer as a wire frame; pad_size=None leaves it unpadded."""
    raw = encode_blob(blob)
    if pad_size is None:
        return raw
    if len(raw) > pad_size:
        raise PayloadTooLargeError(
            "frame needs %d bytes, pad size is %d" % (len(raw), pad_size))
    return raw + b"\x00" * (pad_size - len(raw))


def decode_frame(frame: bytes) -> SealedBlob:
    blob = decode_blob(frame, exact=False)
    pad = frame[LAYER_HEADER_LEN + len(blob.body):]
    if pad.count(0) != len(pad):
        raise WrongKeyError("frame padding must be zero bytes")
    return blob


def frame_fields(frame: bytes) -> list[tuple[str, int, int]]:
    """Field map (name, start, end) accounting for every byte of a frame.

    Used by structural checks: the schema has no room for hop counters or
    any other mutable-per-hop field.
    """
    blob = decode_frame(frame)
    body_end = LAYER_HEADER_LEN + len(blob.body)
    fields = [("scheme", 0, 1), ("key_id", 1, 1 + KEY_ID_LEN),
              ("body_length", 1 + KEY_ID_LEN, LAYER_HEADER_LEN),
              ("body", LAYER_HEADER_LEN, body_end)]
    if body_end != len(frame):
        fields.append(("padding", body_end, len(frame)))
    return fields


@dataclass(frozen=True)
class Packet:
    """A frame plus its visible transport header (destination, class)."""
    dest: PeerId
    frame_class: FrameClass
    frame: bytes


# ---------------------------------------------------------------------------
# Response block (the embedded return route)


@dataclass(frozen=True)
class ResponseBlock:
    """Head of the return route: visible to the provider once unsealed from
    the innermost request layer. ``tail`` is sealed to ``next_peer``."""
    next_peer: PeerId
    tail: Optional[SealedBlob]


@dataclass(frozen=True)
class ResponseLayer:
    """One opened return-route layer.

    ``transit_key`` is the hop's content re-encryption key (None only on the
    provider's plaintext head). ``tail`` is None only at the terminal layer,
    which is sealed to the requester itself, so no relay can tell how far
    from the requester it sits.
    """
    next_peer: PeerId
    transit_key: Optional[KeyHandle]
    tail: Optional[SealedBlob]


def _encode_response_layer(next_peer: PeerId, key: KeyHandle,
                           tail: Optional[SealedBlob]) -> bytes:
    tail_raw = encode_blob(tail) if tail is not None else b""
    return (next_peer.to_bytes(8, "big") + encode_key(key)
            + len(tail_raw).to_bytes(4, "big") + tail_raw)


def _decode_response_layer(data: bytes) -> ResponseLayer:
    if len(data) < 8 + KEY_WIRE_LEN + 4:
        raise WrongKeyError("malformed return-route layer")
    next_peer = int.from_bytes(data[:8], "big")
    key = decode_key(data[8:8 + KEY_WIRE_LEN], KeyKind.SYMMETRIC)
    off = 8 + KEY_WIRE_LEN
    n = int.from_bytes(data[off:off + 4], "big")
    tail_raw = data[off + 4:]
    if len(tail_raw) != n:
        raise WrongKeyError("malformed return-route tail")
    tail = decode_blob(tail_raw) if n else None
    return ResponseLayer(next_peer, key, tail)


def encode_response_block(rblock: ResponseBlock) -> bytes:
    tail_raw = encode_blob(rblock.tail) if rblock.tail is not None else b""
    return rblock.next_peer.to_bytes(8, "big") + len(tail_raw).to_bytes(4, "big") + tail_raw


def decode_response_block(data: bytes) -> ResponseBlock:
    if len(data) < 12:
        raise WrongKeyError("malformed response block")
    next_peer = int.from_bytes(data[:8], "big")
    n = int.from_bytes(data[8:12], "big")
    tail_raw = data[12:]
    if len(tail_raw) != n:
        raise WrongKeyError("malformed response block tail")
    return ResponseBlock(next_peer, decode_blob(tail_raw) if n else None)


def build_response_block(response_path: list[PeerId], requester: PeerId,
                         keys: Mapping[PeerId, KeyHandle],
                         session_key: KeyHandle,
                         transit_keys: list[KeyHandle],
                         on_seal: Optional[SealHook] = None) -> ResponseBlock:
    """Build the nested return route for ``response_path ++ [requester]``.

    ``transit_keys[i]`` is handed to hop ``response_path[i]``; the terminal
    layer carries ``session_key`` back to the requester so it can match the
    cycle and strip the transit layers. Layers are sealed to each hop's
    public key; only the requester's own terminal layer reveals that the
    chain ends.
    """
    if not response_path:
        raise ValueError("response path must not be empty")
    if len(set(response_path)) != len(response_path) or requester in response_path:
        raise ValueError("response path hops must be distinct and exclude the requester")
    if len(transit_keys) != len(response_path):
        raise ValueError("one transit key per response hop required")
    try:
        terminal_key = keys[requester]
    except KeyError:
        raise UnknownKeyError("no key for requester %d" % requester) from None
    tail = seal(terminal_key,
                _encode_response_layer(requester, session_key, None), on_seal)
    hops = list(zip(response_path, transit_keys))
    for i in range(len(hops) - 1, -1, -1):
        hop, transit = hops[i]
        successor = response_path[i + 1] if i + 1 < len(response_path) else requester
        try:
            hop_key = keys[hop]
        except KeyError:
            raise UnknownKeyError("no key for hop %d" % hop) from None
        tail = seal(hop_key,
                    _encode_response_layer(successor, transit, tail), on_seal)
    return ResponseBlock(response_path[0], tail)


def open_response_block(block: Union[ResponseBlock, SealedBlob],
                        own_keys: Iterable[KeyHandle]) -> ResponseLayer:
    """Open the caller's current return-route layer.

    The provider holds the plaintext head (a ResponseBlock); every later hop
    holds a SealedBlob tail addressed to it.
    """
    if isinstance(block, ResponseBlock):
        return ResponseLayer(block.next_peer, None, block.tail)
    return _decode_response_layer(open_with_any(own_keys, block))


# ---------------------------------------------------------------------------
# Request onion


@dataclass(frozen=True)
class PlainPayload:
    body: bytes
    kind: PayloadKind = PayloadKind.REQUEST
    piggyback_key: Optional[KeyHandle] = None


@dataclass(frozen=True)
class Forward:
    next_peer: PeerId
    inner: Packet


@dataclass(frozen=True)
class RelayStep:
    """Raw parse of a relay layer body, before re-framing."""
    next_peer: PeerId
    blob: SealedBlob


@dataclass(frozen=True)
class Deliver:
    payload: PlainPayload
    rblock: Optional[ResponseBlock]


def _encode_innermost(payload: PlainPayload, rblock: Optional[ResponseBlock]) -> bytes:
    key_part = b""
    flag = 0
    if payload.piggyback_key is not None:
        flag = 1
        key_part = encode_key(payload.piggyback_key)
    rblock_raw = encode_response_block(rblock) if rblock is not None else b""
    return (bytes([payload.kind, flag]) + key_part
            + len(payload.body).to_bytes(4, "big") + payload.body
            + len(rblock_raw).to_bytes(4, "big") + rblock_raw)


def _decode_innermost(data: bytes) -> Deliver:
    if len(data) < 2:
        raise WrongKeyError("malformed innermost layer")
    kind, flag = data[0], data[1]
    if kind not in (PayloadKind.REQUEST, PayloadKind.RESPONSE) or flag not in (0, 1):
        raise WrongKeyError("malformed innermost layer")
    off = 2
    key = None
    if flag:
        key = decode_key(data[off:off + KEY_WIRE_LEN], KeyKind.SYMMETRIC)
        off += KEY_WIRE_LEN
    if len(data) < off + 4:
        raise WrongKeyError("malformed innermost layer")
    n = int.from_bytes(data[off:off + 4], "big")
    off += 4
    body = data[off:off + n]
    if len(body) != n:
        raise WrongKeyError("malformed innermost layer")
    off += n
    if len(data) < off + 4:
        raise WrongKeyError("malformed innermost layer")
    rn = int.from_bytes(data[off:off + 4], "big")
    rblock_raw = data[off + 4:]
    if len(rblock_raw) != rn:
        raise WrongKeyError("malformed innermost layer")
    rblock = decode_response_block(rblock_raw) if rn else None
    return Deliver(PlainPayload(body, PayloadKind(kind), key), rblock)


def build_request_onion(request_path: list[PeerId], provider: PeerId,
                        payload: PlainPayload, rblock: Optional[ResponseBlock],
                        keys: Mapping[PeerId, KeyHandle], pad_size: int,
                        on_seal: Optional[SealHook] = None) -> Packet:
    """Wrap ``payload`` (and the return route) once per hop, innermost first.

    Every layer is sealed to the hop's public key, so no relay can be linked
    to the requester through cached pairwise keys. An empty request path
    seals straight to the provider (useful for tests, never used live).
    """
    chain = list(request_path) + [provider]
    if len(set(chain)) != len(chain):
        raise ValueError("request path hops and provider must be distinct")
    try:
        blob = seal(keys[provider], _encode_innermost(payload, rblock), on_seal)
        for i in range(len(request_path) - 1, -1, -1):
            successor = chain[i + 1]
            body = successor.to_bytes(8, "big") + encode_blob(blob)
            blob = seal(keys[request_path[i]], body, on_seal)
    except KeyError as exc:
        raise UnknownKeyError("no key for hop %s" % exc) from None
    return Packet(chain[0], FrameClass.DATA, encode_frame(blob, pad_size))


def _try_relay(body: bytes) -> Optional[RelayStep]:
    if len(body) < 8 + LAYER_HEADER_LEN:
        return None
    try:
        inner = decode_blob(body[8:])
    except WrongKeyError:
        return None
    return RelayStep(int.from_bytes(body[:8], "big"), inner)


def parse_data_body(body: bytes) -> Union[RelayStep, Deliver, "ResponseHop"]:
    """Classify an opened DATA layer body.

    Relay layers parse as RelayStep, the innermost request layer as Deliver,
    response hop bodies as ResponseHop. Anything else raises WrongKeyError.
    """
    if len(body) >= 1 and body[0] == PayloadKind.RESPONSE:
        return _decode_response_body(body)
    step = _try_relay(body)
    if step is not None:
        return step
    return _decode_innermost(body)


def peel_layer(packet: Packet, own_keys: Iterable[KeyHandle]) -> Union[Forward, Deliver]:
    """Remove the caller's layer: relay instruction or final delivery.

    The forwarded inner frame is re-padded to the incoming frame's length,
    so the observable size never shrinks along the path. Raises
    WrongKeyError for frames the caller cannot open (callers drop those
    silently; a failed open never produces a reply).
    """
    blob = decode_frame(packet.frame)
    body = open_with_any(own_keys, blob)
    step = _try_relay(body)
    if step is not None:
        inner_frame = encode_frame(step.blob, len(packet.frame))
        return Forward(step.next_peer,
                       Packet(step.next_peer, FrameClass.DATA, inner_frame))
    return _decode_innermost(body)


def max_message_len(pad_size: int, n_request_hops: int, n_response_hops: int,
                    with_key: bool = True) -> int:
    """Largest message that still fits the outer frame after all wrapping."""
    def onion_size(mlen: int) -> int:
        rblock = 12
        layer = CIPHER.body_length(8 + KEY_WIRE_LEN + 4) + LAYER_HEADER_LEN
        tail = layer
        for _ in range(n_response_hops):
            tail = CIPHER.body_length(8 + KEY_WIRE_LEN + 4 + tail) + LAYER_HEADER_LEN
        rblock += tail
        inner = 2 + (KEY_WIRE_LEN if with_key else 0) + 4 + mlen + 4 + rblock
        size = CIPHER.body_length(inner) + LAYER_HEADER_LEN
        for _ in range(n_request_hops):
            size = CIPHER.body_length(8 + size) + LAYER_HEADER_LEN
        return size

    lo, hi = 0, pad_size
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if onion_size(mid) <= pad_size:
            lo = mid
        else:
            hi = mid - 1
    return lo


# ---------------------------------------------------------------------------
# Response hop frames


RESPONSE_END = None  # terminal marker for the tail argument of wrap_response


def _encode_response_body(piggyback: Optional[KeyHandle], content: bytes,
                          tail: Optional[SealedBlob]) -> bytes:
    key_part = encode_key(piggyback) if piggyback is not None else b""
    tail_raw = encode_blob(tail) if tail is not None else b""
    return (bytes([PayloadKind.RESPONSE, 1 if piggyback else 0]) + key_part
            + len(content).to_bytes(4, "big") + content
            + len(tail_raw).to_bytes(4, "big") + tail_raw)


@dataclass(frozen=True)
class ResponseHop:
    """Decoded content of one response frame at its addressed hop."""
    piggyback_key: Optional[KeyHandle]
    content: bytes
    tail: Optional[SealedBlob]


def _decode_response_body(data: bytes) -> ResponseHop:
    if len(data) < 2 or data[0] != PayloadKind.RESPONSE or data[1] not in (0, 1):
        raise WrongKeyError("not a response body")
    off = 2
    key = None
    if data[1]:
        key = decode_key(data[off:off + KEY_WIRE_LEN], KeyKind.SYMMETRIC)
        off += KEY_WIRE_LEN
    if len(data) < off + 4:
        raise WrongKeyError("malformed response body")
    n = int.from_bytes(data[off:off + 4], "big")
    off += 4
    content = data[off:off + n]
    if len(content) != n:
        raise WrongKeyError("malformed response body")
    off += n
    if len(data) < off + 4:
        raise WrongKeyError("malformed response body")
    tn = int.from_bytes(data[off:off + 4], "big")
    tail_raw = data[off + 4:]
    if len(tail_raw) != tn:
        raise WrongKeyError("malformed response body")
    return ResponseHop(key, content, decode_blob(tail_raw) if tn else None)


def wrap_response(content: bytes, hop_key: KeyHandle, tail: Optional[SealedBlob],
                  pad_size: int, piggyback: Optional[KeyHandle] = None,
                  on_seal: Optional[SealHook] = None) -> Packet:
    """Seal response content for the next hop, attaching that hop's tail.

    The tail rides outside the content, so the hop can detach and replace it
    without touching the content; with end-to-end sealing the content itself
    stays opaque to every relay. ``tail=None`` produces the final,
    requester-deliverable frame.
    """
    blob = seal(hop_key, _encode_response_body(piggyback, content, tail), on_seal)
    return Packet(hop_key.owner, FrameClass.DATA, encode_frame(blob, pad_size))


def open_response_frame(packet: Packet, own_keys: Iterable[KeyHandle]) -> ResponseHop:
    blob = decode_frame(packet.frame)
    return _decode_response_body(open_with_any(own_keys, blob))


def apply_transit(key: KeyHandle, content: bytes) -> bytes:
    """One hop's re-encryption of the response content (applied by the hop,
    stripped by the requester). Changes the bytes every relay sees."""
    return CIPHER.encrypt(key.secret, content)


def strip_transit(keys: list[KeyHandle], content: bytes) -> bytes:
    """Undo apply_transit for ``keys`` given in application order."""
    for key in reversed(keys):
        content = CIPHER.decrypt(key.secret, content)
    return content


# ---------------------------------------------------------------------------
# Per-peer symmetric key cache


@dataclass
class KeyTable:
    """Cache of other peers' symmetric keys, learned via piggybacked
    exchange on first contact. Holds at most one entry per other peer."""
    own_symmetric: KeyHandle
    entries: dict[PeerId, KeyHandle] = field(default_factory=dict)


@dataclass(frozen=True)
class SchemeChoice:
    scheme: int
    key: KeyHandle
    piggyback: Optional[KeyHandle]  # own key to send along, asymmetric only


def select_scheme(table: KeyTable, dest: PeerId, dest_public: KeyHandle) -> SchemeChoice:
    """Pick the sealing key for a direct send: the cached symmetric key if
    present, otherwise the destination's public key plus a piggyback of the
    caller's own symmetric key."""
    if dest == table.own_symmetric.owner:
        raise InvalidKeyUseError("no scheme toward self")
    cached = table.entries.get(dest)
    if cached is not None:
        return SchemeChoice(SCHEME_SYMMETRIC, cached, None)
    return SchemeChoice(SCHEME_ASYMMETRIC, dest_public, table.own_symmetric)


def record_piggybacked_key(table: KeyTable, sender: PeerId, key: KeyHandle) -> KeyTable:
    """Store a key received from ``sender``; the latest received wins."""
    if key.kind != KeyKind.SYMMETRIC:
        raise InvalidKeyUseError("only symmetric keys may be cached")
    if sender == table.own_symmetric.owner:
        raise InvalidKeyUseError("own id never appears as an entry")
    table.entries[sender] = key
    return table
