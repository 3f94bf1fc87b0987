"""Counter-based, splittable random streams.

Every random draw in the simulator is addressed by ``(seed, stream, counter)``
so that a given pair, dark-count block or Franson outcome always receives the
same random numbers no matter how the run is partitioned into slabs or
threads. The counter-based Philox generator shipped with numpy is used as the
primitive; one Philox counter step yields four 64-bit words.
"""

from __future__ import annotations

import numpy as np

WORDS_PER_COUNTER = 4

# Fixed stream identifiers. Changing one changes every seeded output.
STREAMS = {
    "pair_counts": 1,
    "pairs": 2,
    "detect": 3,
    "dark_counts": 4,
    "dark_times": 5,
    "franson": 6,
    "ce_noise": 7,
    "fringe_noise": 8,
}

_INV_2_53 = 1.0 / 9007199254740992.0


def _stream_id(stream: str | int) -> int:
    if isinstance(stream, str):
        try:
            return STREAMS[stream]
        except KeyError:
            raise ValueError(f"unknown random stream {stream!r}") from None
    return int(stream)


class CounterRNG:
    """Random access to a keyed Philox stream.

    ``words(start, count)`` returns the ``count`` rows of four uint64 words
    belonging to counters ``start .. start + count - 1``. Rows depend only on
    the key and the counter, never on what was drawn before.
    """

    def __init__(self, seed: int, stream: str | int = 0):
        self.seed = int(seed)
        self.stream = _stream_id(stream)
        ss = np.random.SeedSequence([self.seed & 0xFFFFFFFFFFFFFFFF, self.stream])
        self.key = ss.generate_state(2, dtype=np.uint64)

    def split(self, stream: str | int) -> "CounterRNG":
        return CounterRNG(self.seed, stream)

    def words(self, start: int, count: int) -> np.ndarray:
        if start < 0 or count < 0:
            raise ValueError("counter range must be non-negative")
        bitgen = np.random.Philox(key=self.key)
        if start:
            bitgen.advance(int(start))
        raw = bitgen.random_raw(WORDS_PER_COUNTER * int(count))
        return raw.reshape(int(count), WORDS_PER_COUNTER)

    def uniforms(self, start: int, count: int) -> np.ndarray:
        """Open-interval (0, 1) doubles, shape (count, 4)."""
        return to_open_unit(self.words(start, count))

    def generator(self) -> np.random.Generator:
        """Sequential generator on the same key, for bulk draws done once per run."""
        return np.random.Generator(np.random.Philox(key=self.key))


def to_open_unit(words: np.ndarray) -> np.ndarray:
    # 53-bit mantissa shifted by half an ulp: never exactly 0 or 1
    return ((words >> np.uint64(11)).astype(np.float64) + 0.5) * _INV_2_53
