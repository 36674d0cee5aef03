"""Protocol transcripts: everything the untrusted server (adversary) sees.

A transcript is a sequence of rounds; each round carries server broadcasts
and per-user report payloads organized into named streams (disjoint user
subsets reporting in parallel share a round).  Aggregators read reports back
out of the transcript, so replaying a recorded file through the same
aggregation code reproduces the original outputs bit for bit.

On-disk format (versioned header ``LDPT1``, little-endian):

    magic 5s | u16 version | u32 record_count
    record := u32 round_id | u32 user_id | u32 payload_len | payload

``user_id`` sentinels: 0xFFFFFFFE marks a server broadcast, 0xFFFFFFFD a
stream header (JSON metadata), 0xFFFFFFFF a pooled aggregate record standing
in for the individual reports of one stream (used when materializing every
user's report would be too large; the aggregate is distributed identically).
Every payload is framed as u16 tag_len | tag utf-8 | body.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"LDPT1"
VERSION = 1
USER_POOLED = 0xFFFFFFFF
USER_BROADCAST = 0xFFFFFFFE
USER_STREAM_META = 0xFFFFFFFD


def pack_array(arr: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(arr)
    head = json.dumps({"dtype": arr.dtype.str, "shape": list(arr.shape)}).encode("ascii")
    return struct.pack("<I", len(head)) + head + arr.tobytes()


def unpack_array(buf: bytes) -> np.ndarray:
    (hlen,) = struct.unpack_from("<I", buf, 0)
    head = json.loads(buf[4 : 4 + hlen].decode("ascii"))
    arr = np.frombuffer(buf[4 + hlen :], dtype=np.dtype(head["dtype"]))
    return arr.reshape(head["shape"]).copy()


@dataclass
class Stream:
    """Reports of one parallel group of users within a round."""

    tag: str
    meta: dict
    user_ids: list[int] = field(default_factory=list)
    payloads: list[bytes] = field(default_factory=list)
    pooled: bytes | None = None

    def add_report(self, user_id: int, payload: bytes) -> None:
        if self.pooled is not None:
            raise ValueError("stream already holds a pooled aggregate")
        self.user_ids.append(int(user_id))
        self.payloads.append(payload)

    def set_pooled(self, payload: bytes) -> None:
        if self.user_ids:
            raise ValueError("stream already holds per-user reports")
        self.pooled = payload

    # Aggregate views -------------------------------------------------

    def bit_counts(self) -> np.ndarray:
        """Per-bin sums of the one-bit reports ('freq' streams)."""
        if self.meta.get("kind") != "freq":
            raise ValueError(f"stream {self.tag} is not a frequency stream")
        bins = int(self.meta["bins"])
        if self.pooled is not None:
            return unpack_array(self.pooled).astype(np.int64)
        counts = np.zeros(bins, dtype=np.int64)
        for payload in self.payloads:
            bits = np.unpackbits(np.frombuffer(payload, dtype=np.uint8), count=bins)
            counts += bits
        return counts

    def vector_sum(self) -> np.ndarray:
        """Sum of per-user real-vector reports ('vecsum' streams)."""
        if self.meta.get("kind") != "vecsum":
            raise ValueError(f"stream {self.tag} is not a vector stream")
        shape = tuple(self.meta["shape"])
        if self.pooled is not None:
            return unpack_array(self.pooled).reshape(shape)
        total = np.zeros(shape, dtype=np.float64)
        for payload in self.payloads:
            total += unpack_array(payload).reshape(shape)
        return total

    @property
    def n_users(self) -> int:
        return int(self.meta["n_users"])


@dataclass
class Round:
    round_id: int
    broadcasts: list[tuple[str, bytes]] = field(default_factory=list)
    streams: dict[str, Stream] = field(default_factory=dict)


@dataclass
class Transcript:
    rounds: dict[int, Round] = field(default_factory=dict)

    def round(self, round_id: int) -> Round:
        if round_id not in self.rounds:
            self.rounds[round_id] = Round(round_id)
        return self.rounds[round_id]

    def broadcast(self, round_id: int, tag: str, payload: bytes) -> None:
        self.round(round_id).broadcasts.append((tag, payload))

    def new_stream(self, round_id: int, tag: str, meta: dict) -> Stream:
        rnd = self.round(round_id)
        if tag in rnd.streams:
            raise ValueError(f"duplicate stream tag {tag!r} in round {round_id}")
        stream = Stream(tag=tag, meta=dict(meta))
        rnd.streams[tag] = stream
        return stream

    def stream(self, round_id: int, tag: str) -> Stream:
        return self.rounds[round_id].streams[tag]

    @property
    def round_count(self) -> int:
        return len(self.rounds)

    def all_streams(self):
        for rid in sorted(self.rounds):
            for tag in sorted(self.rounds[rid].streams):
                yield rid, self.rounds[rid].streams[tag]

    # ----------------------------------------------------------------- I/O

    def write(self, path: str | Path) -> None:
        records: list[tuple[int, int, bytes]] = []
        for rid in sorted(self.rounds):
            rnd = self.rounds[rid]
            for tag, payload in rnd.broadcasts:
                records.append((rid, USER_BROADCAST, _frame(tag, payload)))
            for tag in sorted(rnd.streams):
                stream = rnd.streams[tag]
                meta_body = json.dumps(stream.meta, sort_keys=True).encode("ascii")
                records.append((rid, USER_STREAM_META, _frame(tag, meta_body)))
                if stream.pooled is not None:
                    records.append((rid, USER_POOLED, _frame(tag, stream.pooled)))
                else:
                    for uid, payload in zip(stream.user_ids, stream.payloads):
                        records.append((rid, uid, _frame(tag, payload)))
        with Path(path).open("wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<HI", VERSION, len(records)))
            for rid, uid, body in records:
                fh.write(struct.pack("<III", rid, uid, len(body)))
                fh.write(body)


def _frame(tag: str, body: bytes) -> bytes:
    tag_b = tag.encode("utf-8")
    return struct.pack("<H", len(tag_b)) + tag_b + body


def _unframe(buf: bytes) -> tuple[str, bytes]:
    (tlen,) = struct.unpack_from("<H", buf, 0)
    tag = buf[2 : 2 + tlen].decode("utf-8")
    return tag, buf[2 + tlen :]


def read_transcript(path: str | Path) -> Transcript:
    raw = Path(path).read_bytes()
    if raw[:5] != MAGIC:
        raise ValueError("not a transcript file (bad magic)")
    version, count = struct.unpack_from("<HI", raw, 5)
    if version != VERSION:
        raise ValueError(f"unsupported transcript version {version}")
    ts = Transcript()
    offset = 11
    for _ in range(count):
        rid, uid, plen = struct.unpack_from("<III", raw, offset)
        offset += 12
        tag, body = _unframe(raw[offset : offset + plen])
        offset += plen
        if uid == USER_BROADCAST:
            ts.broadcast(rid, tag, body)
        elif uid == USER_STREAM_META:
            ts.new_stream(rid, tag, json.loads(body.decode("ascii")))
        elif uid == USER_POOLED:
            ts.stream(rid, tag).set_pooled(body)
        else:
            ts.stream(rid, tag).add_report(uid, body)
    return ts
