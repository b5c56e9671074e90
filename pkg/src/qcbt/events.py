"""Time-tagged event streams: in-memory layout, merging and file I/O.

A stream is a numpy structured array of :data:`EVENT_DTYPE`, sorted by
timestamp.  The ``tag`` field carries provenance (pair id, laser photon
id, or :data:`TAG_BACKGROUND`) for validation and is never written to
disk.

Binary layout (little-endian)::

    header  16 B : magic "QCBTEVT1", u16 version, u16 camera id, u32 reserved
    record  16 B : u64 t [ns], u16 px, u16 py, u8 plane, u8 arm, u16 reserved
"""

from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

EVENT_DTYPE = np.dtype([
    ("t", np.int64),
    ("px", np.uint16),
    ("py", np.uint16),
    ("plane", np.uint8),
    ("arm", np.uint8),
    ("tag", np.int64),
])

TAG_UNKNOWN = -1
TAG_BACKGROUND = -2

MAGIC = b"QCBTEVT1"
VERSION = 1
HEADER = struct.Struct("<8sHHI")
RECORD_DTYPE = np.dtype([
    ("t", "<u8"),
    ("px", "<u2"),
    ("py", "<u2"),
    ("plane", "u1"),
    ("arm", "u1"),
    ("reserved", "<u2"),
])
assert HEADER.size == 16 and RECORD_DTYPE.itemsize == 16

CSV_FIELDS = ("t", "px", "py", "plane", "arm")


class EventFormatError(ValueError):
    """Malformed event file; ``offset`` is the byte offset of the problem."""

    def __init__(self, msg: str, offset: int):
        super().__init__(f"{msg} (byte offset {offset})")
        self.offset = offset


class UnsortedStreamError(ValueError):
    def __init__(self, stream: int, index: int):
        super().__init__(f"stream {stream} is not sorted by timestamp at index {index}")
        self.stream = stream
        self.index = index


def empty_events(n: int = 0) -> np.ndarray:
    ev = np.zeros(n, dtype=EVENT_DTYPE)
    ev["tag"] = TAG_UNKNOWN
    return ev


def make_events(t, px, py, plane, arm, tag=None) -> np.ndarray:
    t = np.asarray(t)
    ev = np.empty(len(t), dtype=EVENT_DTYPE)
    ev["t"] = t
    ev["px"] = px
    ev["py"] = py
    ev["plane"] = plane
    ev["arm"] = arm
    ev["tag"] = TAG_UNKNOWN if tag is None else tag
    return ev


def first_unsorted(t: np.ndarray) -> int:
    """Index of the first timestamp smaller than its predecessor, or -1."""
    bad = np.flatnonzero(np.diff(t) < 0)
    return int(bad[0]) + 1 if len(bad) else -1


def check_sorted(events: np.ndarray, stream: int = 0):
    i = first_unsorted(events["t"])
    if i >= 0:
        raise UnsortedStreamError(stream, i)


def sort_events(events: np.ndarray) -> np.ndarray:
    """Stable sort by (t, plane, arm, px, py)."""
    t = events["t"]
    # timsort is near-linear on the almost-sorted streams produced here
    order = np.argsort(t, kind="stable")
    ts = t[order]
    tie = np.flatnonzero(ts[1:] == ts[:-1])
    if len(tie):
        pos = np.unique(np.concatenate([tie, tie + 1]))
        sub = order[pos]
        e = events[sub]
        key = ((e["plane"].astype(np.int64) << 34) | (e["arm"].astype(np.int64) << 32)
               | (e["px"].astype(np.int64) << 16) | e["py"].astype(np.int64))
        order[pos] = sub[np.lexsort((key, e["t"]))]
    return events[order]


def merge_streams(streams) -> np.ndarray:
    """Merge time-sorted streams into one time-sorted stream.

    Ties on timestamp are ordered by (plane, arm, px, py); remaining ties
    keep input order, streams taken in the order given.
    """
    streams = list(streams)
    for k, s in enumerate(streams):
        check_sorted(s, k)
    if not streams:
        return empty_events()
    if len(streams) == 1:
        return streams[0].copy()
    return sort_events(np.concatenate(streams))


def write_events(events: np.ndarray, path, camera_id: int = 0):
    rec = np.zeros(len(events), dtype=RECORD_DTYPE)
    if np.any(events["t"] < 0):
        raise ValueError("timestamps must be non-negative")
    for f in CSV_FIELDS:
        rec[f] = events[f]
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, VERSION, camera_id, 0))
        fh.write(rec.tobytes())


def read_events(path, with_header: bool = False):
    """Read a binary event file.  Tags come back as :data:`TAG_UNKNOWN`."""
    data = Path(path).read_bytes()
    if len(data) < HEADER.size:
        raise EventFormatError("file shorter than header", len(data))
    magic, version, camera_id, _ = HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise EventFormatError(f"bad magic {magic!r}", 0)
    if version != VERSION:
        raise EventFormatError(f"unsupported version {version}", 8)
    body = len(data) - HEADER.size
    n, rem = divmod(body, RECORD_DTYPE.itemsize)
    if rem:
        raise EventFormatError(f"truncated record ({rem} of 16 bytes)", HEADER.size + n * RECORD_DTYPE.itemsize)
    rec = np.frombuffer(data, dtype=RECORD_DTYPE, count=n, offset=HEADER.size)
    bad = np.flatnonzero((rec["plane"] > 1) | (rec["arm"] > 2) | (rec["t"] > np.iinfo(np.int64).max))
    if len(bad):
        raise EventFormatError(f"invalid plane/arm code in record {bad[0]}", HEADER.size + 16 * int(bad[0]))
    ev = empty_events(n)
    for f in CSV_FIELDS:
        ev[f] = rec[f]
    if with_header:
        return ev, {"version": version, "camera_id": camera_id}
    return ev


def write_events_csv(events: np.ndarray, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_FIELDS)
        for row in zip(*(events[f].tolist() for f in CSV_FIELDS)):
            w.writerow(row)


def read_events_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        if tuple(header) != CSV_FIELDS:
            raise ValueError(f"unexpected CSV header {header}")
        rows = [tuple(int(v) for v in row) for row in r]
    ev = empty_events(len(rows))
    if rows:
        cols = np.array(rows, dtype=np.int64).T
        for f, c in zip(CSV_FIELDS, cols):
            ev[f] = c
    return ev
