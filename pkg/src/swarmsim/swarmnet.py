"""Simulated dual-channel swarm network and framed message protocol.

Frame layout (see docs/protocol.md for the byte-exact reference):

    magic(0xFD) | payload_length | sequence | system_id | message_id |
    payload[payload_length] | crc16(little-endian)

The CRC is CRC-16/CCITT-FALSE (poly 0x1021, init 0xFFFF) over the bytes from
payload_length through the end of the payload.  The network itself is a
single logical event queue: transmit() schedules deliveries per recipient
with serialization delay, sampled latency, seeded Bernoulli loss and a range
cut-off; per-link FIFO order is preserved.
"""

from __future__ import annotations

import heapq
import math
import struct
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

MAGIC = 0xFD
HEADER_LEN = 5
CRC_LEN = 2

# Message ids
HEARTBEAT = 0
PLAN_PROGRESS = 1
ASSIGNMENT = 2
COMMAND = 3
ACK = 4
DETECTION = 5
IMAGERY_CHUNK = 6

MSG_NAMES = {
    HEARTBEAT: "HEARTBEAT",
    PLAN_PROGRESS: "PLAN_PROGRESS",
    ASSIGNMENT: "ASSIGNMENT",
    COMMAND: "COMMAND",
    ACK: "ACK",
    DETECTION: "DETECTION",
    IMAGERY_CHUNK: "IMAGERY_CHUNK",
}

# Traffic priorities for the outbox scheduler.
PRIO_COMMAND = 0
PRIO_COORDINATION = 1
PRIO_TELEMETRY = 2
PRIO_BULK = 3

OUTBOX_CAPACITY = 1024


def _crc16_table() -> tuple[int, ...]:
    table = []
    for byte in range(256):
        crc = byte << 8
        for _ in range(8):
            if crc & 0x8000:
                crc = ((crc << 1) ^ 0x1021) & 0xFFFF
            else:
                crc = (crc << 1) & 0xFFFF
        table.append(crc)
    return tuple(table)


_CRC_TABLE = _crc16_table()


def crc16_ccitt_false(data: bytes) -> int:
    """CRC-16/CCITT-FALSE: poly 0x1021, init 0xFFFF, no reflection, no xorout."""
    crc = 0xFFFF
    for b in data:
        crc = ((crc << 8) & 0xFFFF) ^ _CRC_TABLE[(crc >> 8) ^ b]
    return crc


# ---------------------------------------------------------------------------
# Message catalog


@dataclass(frozen=True)
class Heartbeat:
    east: float
    north: float
    altitude: float
    airspeed: float
    course: float
    battery: float
    message_id = HEARTBEAT


@dataclass(frozen=True)
class PlanProgress:
    progress: float
    message_id = PLAN_PROGRESS


@dataclass(frozen=True)
class Assignment_:
    """Wire form of a task assignment: (mission, version, awards)."""
    mission_id: int
    version: int
    awards: tuple[tuple[int, int], ...]  # (task_id, agent_id)
    message_id = ASSIGNMENT


@dataclass(frozen=True)
class Command:
    command_id: int
    kind: int
    arg: int
    value: float
    message_id = COMMAND


@dataclass(frozen=True)
class Ack:
    command_id: int
    message_id = ACK


@dataclass(frozen=True)
class Detection:
    target_id: int
    east: float
    north: float
    vel_east: float
    vel_north: float
    message_id = DETECTION


@dataclass(frozen=True)
class ImageryChunk:
    chunk_index: int
    data: bytes
    message_id = IMAGERY_CHUNK


SwarmMessage = (Heartbeat | PlanProgress | Assignment_ | Command | Ack |
                Detection | ImageryChunk)


def _pack_payload(msg: SwarmMessage) -> bytes:
    if isinstance(msg, Heartbeat):
        return struct.pack("<6d", msg.east, msg.north, msg.altitude,
                           msg.airspeed, msg.course, msg.battery)
    if isinstance(msg, PlanProgress):
        return struct.pack("<d", msg.progress)
    if isinstance(msg, Assignment_):
        head = struct.pack("<HIB", msg.mission_id, msg.version, len(msg.awards))
        body = b"".join(struct.pack("<HB", t, a) for t, a in msg.awards)
        return head + body
    if isinstance(msg, Command):
        return struct.pack("<HBBd", msg.command_id, msg.kind, msg.arg, msg.value)
    if isinstance(msg, Ack):
        return struct.pack("<H", msg.command_id)
    if isinstance(msg, Detection):
        return struct.pack("<B4d", msg.target_id, msg.east, msg.north,
                           msg.vel_east, msg.vel_north)
    if isinstance(msg, ImageryChunk):
        return struct.pack("<H", msg.chunk_index) + msg.data
    raise TypeError(f"unknown message type: {type(msg)!r}")


def _unpack_payload(message_id: int, payload: bytes) -> SwarmMessage:
    if message_id == HEARTBEAT:
        return Heartbeat(*struct.unpack("<6d", payload))
    if message_id == PLAN_PROGRESS:
        return PlanProgress(*struct.unpack("<d", payload))
    if message_id == ASSIGNMENT:
        mission_id, version, n = struct.unpack_from("<HIB", payload, 0)
        awards = []
        off = 7
        for _ in range(n):
            t, a = struct.unpack_from("<HB", payload, off)
            awards.append((t, a))
            off += 3
        return Assignment_(mission_id, version, tuple(awards))
    if message_id == COMMAND:
        return Command(*struct.unpack("<HBBd", payload))
    if message_id == ACK:
        return Ack(*struct.unpack("<H", payload))
    if message_id == DETECTION:
        return Detection(*struct.unpack("<B4d", payload))
    if message_id == IMAGERY_CHUNK:
        (idx,) = struct.unpack_from("<H", payload, 0)
        return ImageryChunk(idx, payload[2:])
    raise ValueError(f"unknown message id: {message_id}")


def encode(msg: SwarmMessage, system_id: int, seq: int) -> bytes:
    """Serialize one message into a framed byte string."""
    payload = _pack_payload(msg)
    if len(payload) > 255:
        raise ValueError(f"payload too large: {len(payload)} > 255")
    body = bytes([len(payload), seq & 0xFF, system_id & 0xFF, msg.message_id]) + payload
    crc = crc16_ccitt_false(body)
    return bytes([MAGIC]) + body + struct.pack("<H", crc)


@dataclass(frozen=True)
class DecodedFrame:
    message: SwarmMessage
    system_id: int
    sequence: int


def decode_stream(buf: bytes) -> tuple[list[DecodedFrame], bytes, int]:
    """Parse frames out of a byte stream.

    Returns (frames, remainder, crc_errors).  After a bad frame the parser
    resynchronizes by scanning for the next magic byte.
    """
    frames: list[DecodedFrame] = []
    crc_errors = 0
    i = 0
    n = len(buf)
    first_truncated = None
    while i < n:
        if buf[i] != MAGIC:
            i += 1
            continue
        if i + HEADER_LEN > n:
            if first_truncated is None:
                first_truncated = i
            i += 1
            continue
        plen = buf[i + 1]
        end = i + HEADER_LEN + plen + CRC_LEN
        if end > n:
            # Truncated candidate: keep it pending but scan ahead in case the
            # magic byte was spurious garbage hiding a complete frame.  The
            # duplicate-suppression window absorbs any double decode.
            if first_truncated is None:
                first_truncated = i
            i += 1
            continue
        body = buf[i + 1:i + HEADER_LEN + plen]
        (crc_recv,) = struct.unpack_from("<H", buf, i + HEADER_LEN + plen)
        if crc16_ccitt_false(body) != crc_recv:
            crc_errors += 1
            i += 1  # resync on next magic
            continue
        seq, system_id, message_id = buf[i + 2], buf[i + 3], buf[i + 4]
        try:
            msg = _unpack_payload(message_id, bytes(buf[i + HEADER_LEN:i + HEADER_LEN + plen]))
        except (ValueError, struct.error):
            crc_errors += 1
            i += 1
            continue
        frames.append(DecodedFrame(msg, system_id, seq))
        i = end
    tail_start = first_truncated if first_truncated is not None else i
    return frames, bytes(buf[tail_start:]), crc_errors


def decode(data: bytes) -> DecodedFrame:
    """Decode exactly one frame; raises ValueError if none parses."""
    frames, _, _ = decode_stream(data)
    if not frames:
        raise ValueError("no valid frame in buffer")
    return frames[0]


# ---------------------------------------------------------------------------
# Channel simulation


@dataclass
class ChannelSpec:
    name: str = "latency_sensitive"
    latency_mean: float = 0.050
    latency_jitter: float = 0.010
    bandwidth: float = 100_000.0  # bits/s
    loss_rate: float = 0.0
    range_m: float = 10_000.0
    seed: int = 0

    @classmethod
    def latency_sensitive(cls, **kw) -> "ChannelSpec":
        return cls(name="latency_sensitive", **kw)

    @classmethod
    def latency_insensitive(cls, **kw) -> "ChannelSpec":
        return cls(name="latency_insensitive", latency_mean=0.300,
                   latency_jitter=0.100, bandwidth=5_000_000.0, **kw)


@dataclass
class ChannelCounters:
    """Per-channel accounting.

    Conservation identity (checked in tests): at quiescence,
    sent = delivered + dropped_range + dropped_loss + dropped_crc +
    dropped_duplicate, where delivered counts frames actually handed to the
    application.  dropped_overflow happens before a frame enters `sent`.
    """

    sent: int = 0
    arrived: int = 0
    dropped_range: int = 0
    dropped_loss: int = 0
    dropped_crc: int = 0
    dropped_overflow: int = 0
    dropped_duplicate: int = 0

    @property
    def delivered(self) -> int:
        return self.arrived - self.dropped_crc - self.dropped_duplicate

    def as_dict(self) -> dict:
        d = dict(self.__dict__)
        d["delivered"] = self.delivered
        return d


class SimChannel:
    """One simulated broadcast medium with latency, bandwidth, loss and range."""

    def __init__(self, spec: ChannelSpec):
        self.spec = spec
        self.counters = ChannelCounters()
        self._rng = np.random.default_rng(spec.seed)
        self._queue: list = []  # heap of (deliver_time, tie, recipient, sender, bytes)
        self._tie = 0
        self._next_free: dict[int, float] = {}   # sender -> airtime free time
        self._last_delivery: dict[tuple[int, int], float] = {}  # (from,to) -> time

    def transmit(self, sender: int, sender_pos: tuple[float, float],
                 recipients: Iterable[tuple[int, tuple[float, float]]],
                 frame: bytes, now: float) -> None:
        """Schedule one frame to each recipient; loss/jitter draws are seeded."""
        bits = 8 * len(frame)
        start = max(now, self._next_free.get(sender, 0.0))
        tx_end = start + bits / self.spec.bandwidth
        self._next_free[sender] = tx_end
        for rid, rpos in recipients:
            if rid == sender:
                continue
            self.counters.sent += 1
            dist = math.hypot(rpos[0] - sender_pos[0], rpos[1] - sender_pos[1])
            if dist > self.spec.range_m:
                self.counters.dropped_range += 1
                continue
            if self.spec.loss_rate > 0.0 and self._rng.random() < self.spec.loss_rate:
                self.counters.dropped_loss += 1
                continue
            latency = self.spec.latency_mean
            if self.spec.latency_jitter > 0.0:
                latency += self._rng.normal(0.0, self.spec.latency_jitter)
                latency = max(latency, 0.0)
            t = tx_end + latency
            # Per-link FIFO: never deliver before an earlier frame on this link.
            link = (sender, rid)
            t = max(t, self._last_delivery.get(link, 0.0))
            self._last_delivery[link] = t
            heapq.heappush(self._queue, (t, self._tie, rid, sender, frame))
            self._tie += 1

    def sender_airtime_free(self, sender: int, now: float) -> bool:
        return self._next_free.get(sender, 0.0) <= now

    def deliver_due(self, now: float) -> list[tuple[int, int, bytes]]:
        """Pop all (recipient, sender, frame) due at or before now, in order."""
        out = []
        while self._queue and self._queue[0][0] <= now:
            _, _, rid, sender, frame = heapq.heappop(self._queue)
            self.counters.arrived += 1
            out.append((rid, sender, frame))
        return out

    @property
    def in_flight(self) -> int:
        return len(self._queue)


class CommManager:
    """Per-agent encapsulation/dis-encapsulation endpoint.

    Owns the priority outbox, the wrapping sequence counter, duplicate
    suppression and per-peer freshness tracking.
    """

    DEDUP_WINDOW = 64

    def __init__(self, system_id: int, channel: SimChannel):
        self.system_id = system_id
        self.channel = channel
        self._seq = 0
        self._outbox: list[deque] = [deque() for _ in range(4)]
        self._inbox: list[tuple[float, int, bytes]] = []  # (time, sender, frame)
        self._seen: dict[int, deque] = {}
        self.freshness: dict[int, float] = {}  # sender -> last heard time

    def next_seq(self) -> int:
        s = self._seq
        self._seq = (self._seq + 1) & 0xFF
        return s

    def priority_enqueue(self, msg: SwarmMessage, priority: int,
                         recipients, sender_pos) -> None:
        """Queue a message; on overflow the newest lowest-priority frame drops."""
        if priority not in (0, 1, 2, 3):
            raise ValueError("priority must be 0..3")
        frame = encode(msg, self.system_id, self.next_seq())
        self._outbox[priority].append((frame, tuple(recipients), sender_pos))
        total = sum(len(q) for q in self._outbox)
        if total > OUTBOX_CAPACITY:
            for p in (3, 2, 1, 0):
                if self._outbox[p]:
                    self._outbox[p].pop()  # newest frame of lowest backlog class
                    self.channel.counters.dropped_overflow += 1
                    break

    def pump(self, now: float) -> None:
        """Drain the outbox in strict priority order (FIFO within a class).

        Serialization onto the channel is sequential: transmit() queues each
        frame behind the sender's previous airtime, so under saturation the
        highest class always goes to air first.
        """
        while True:
            item = None
            for p in range(4):
                if self._outbox[p]:
                    item = self._outbox[p].popleft()
                    break
            if item is None:
                return
            frame, recipients, sender_pos = item
            self.channel.transmit(self.system_id, sender_pos, recipients, frame, now)

    def receive(self, now: float, sender: int, frame: bytes) -> None:
        self._inbox.append((now, sender, frame))

    def poll(self, now: float) -> list[tuple[int, SwarmMessage]]:
        """Decode everything delivered by now; dedup by (sender, sequence)."""
        out: list[tuple[int, SwarmMessage]] = []
        remaining = []
        for t, sender, frame in self._inbox:
            if t > now:
                remaining.append((t, sender, frame))
                continue
            frames, _, crc_errors = decode_stream(frame)
            self.channel.counters.dropped_crc += crc_errors
            for f in frames:
                seen = self._seen.setdefault(f.system_id, deque(maxlen=self.DEDUP_WINDOW))
                if f.sequence in seen:
                    self.channel.counters.dropped_duplicate += 1
                    continue
                seen.append(f.sequence)
                self.freshness[f.system_id] = now
                out.append((f.system_id, f.message))
        self._inbox = remaining
        return out

    def peer_age(self, peer: int, now: float) -> float:
        return now - self.freshness.get(peer, -math.inf)
