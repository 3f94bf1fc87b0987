"""Time-tag streams and their on-disk formats.

Binary format: packed little-endian records ``u8 channel, i64 time_fs``
(9 bytes each, no header). CSV fallback: header ``channel,time_fs``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

TAG_DTYPE = np.dtype([("channel", "u1"), ("time_fs", "<i8")])
FS_PER_S = 10 ** 15


class OrderingError(ValueError):
    """Time tags are not sorted by time."""


@dataclass
class TimeTagStream:
    times_fs: np.ndarray
    channels: np.ndarray
    duration_s: float
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times_fs = np.ascontiguousarray(self.times_fs, dtype=np.int64)
        self.channels = np.ascontiguousarray(self.channels, dtype=np.uint8)
        if self.times_fs.shape != self.channels.shape or self.times_fs.ndim != 1:
            raise ValueError("times and channels must be 1-D arrays of equal length")

    def __len__(self):
        return self.times_fs.size

    def validate(self) -> "TimeTagStream":
        if self.times_fs.size > 1 and np.any(np.diff(self.times_fs) < 0):
            raise OrderingError("time tags are not sorted")
        bad = (self.channels != 1) & (self.channels != 2)
        if np.any(bad):
            raise ValueError(f"invalid channel(s) {np.unique(self.channels[bad])}; expected 1 or 2")
        return self

    def channel_times(self, ch: int) -> np.ndarray:
        return self.times_fs[self.channels == ch]

    def counts(self) -> tuple[int, int]:
        return int(np.count_nonzero(self.channels == 1)), int(np.count_nonzero(self.channels == 2))

    def shifted(self, delta_fs: int) -> "TimeTagStream":
        return TimeTagStream(self.times_fs + np.int64(delta_fs), self.channels.copy(),
                             self.duration_s, self.seed, dict(self.meta))

    def same_tags(self, other: "TimeTagStream") -> bool:
        return (np.array_equal(self.times_fs, other.times_fs)
                and np.array_equal(self.channels, other.channels))

    @classmethod
    def concatenate(cls, parts, duration_s=None, seed=None, meta=None) -> "TimeTagStream":
        parts = list(parts)
        if not parts:
            return cls(np.empty(0, np.int64), np.empty(0, np.uint8), duration_s or 0.0, seed, meta or {})
        t = np.concatenate([p.times_fs for p in parts])
        ch = np.concatenate([p.channels for p in parts])
        if duration_s is None:
            duration_s = sum(p.duration_s for p in parts)
        return cls(t, ch, duration_s, seed if seed is not None else parts[0].seed,
                   meta if meta is not None else dict(parts[0].meta))

    # -- IO

    def to_records(self) -> np.ndarray:
        rec = np.empty(len(self), dtype=TAG_DTYPE)
        rec["channel"] = self.channels
        rec["time_fs"] = self.times_fs
        return rec

    def write_binary(self, path) -> None:
        self.to_records().tofile(path)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["channel", "time_fs"])
            w.writerows(zip(self.channels.tolist(), self.times_fs.tolist()))

    @classmethod
    def from_records(cls, rec, duration_s=None, **kw) -> "TimeTagStream":
        times = rec["time_fs"].astype(np.int64)
        if duration_s is None:
            duration_s = float(times[-1] + 1) / FS_PER_S if times.size else 0.0
        return cls(times, rec["channel"].astype(np.uint8), duration_s, **kw)

    @classmethod
    def read_binary(cls, path, duration_s=None) -> "TimeTagStream":
        return cls.from_records(np.fromfile(path, dtype=TAG_DTYPE), duration_s)

    @classmethod
    def read_csv(cls, path, duration_s=None) -> "TimeTagStream":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != ["channel", "time_fs"]:
                raise ValueError(f"{path}: expected header channel,time_fs, got {header}")
            rows = [(int(a), int(b)) for a, b in reader]
        rec = np.array(rows, dtype=TAG_DTYPE) if rows else np.empty(0, TAG_DTYPE)
        return cls.from_records(rec, duration_s)

    @classmethod
    def read(cls, path, duration_s=None) -> "TimeTagStream":
        if str(path).endswith(".csv"):
            return cls.read_csv(path, duration_s)
        return cls.read_binary(path, duration_s)
