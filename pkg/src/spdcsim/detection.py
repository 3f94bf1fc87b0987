"""Detection chain: loss, routing, detector efficiency, dark counts, jitter.

Each photon of a pair independently ends up lost, on channel 1 or on channel
2; the joint outcome of the two photons is drawn with a single uniform keyed by
the pair id. Jitter is a Gaussian truncated at +-6 sigma so that a time slab
padded by 6 sigma (plus any interferometer delay) sees every tag that can land
in it, which makes slab-partitioned runs exact.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Iterator

import numpy as np
from scipy.special import erf, ndtr, ndtri

from .rng import CounterRNG
from .source import PairBatch, SourceSpec, pair_process
from .tags import FS_PER_S, TimeTagStream

JITTER_CUTOFF_SIGMA = 6.0
DARK_BLOCK_FS = FS_PER_S

# Coupling / propagation losses of the poled Si3N4 waveguide at 1560 nm and 780 nm.
FH_FACET_LOSS_DB = 2.7
SH_FACET_LOSS_DB = 4.6
FH_PROPAGATION_DB_PER_CM = 0.33
SH_PROPAGATION_DB_PER_CM = 0.73
WAVEGUIDE_LENGTH_CM = 8.1

# Lumped detection efficiency chosen so that, with 7 dB per photon and 100 Hz
# darks, the CAR at 8 uW lands at ~1635 and the slope at 0.58 kHz/mW.
# Calibrated to the published observables; not a measured detector value.
CALIBRATED_DETECTOR_EFFICIENCY = 6.8e-3


def per_photon_loss_db(filter_and_coupler_db: float = 2.9635,
                       propagation_cm: float = WAVEGUIDE_LENGTH_CM / 2.0) -> float:
    """Loss budget of one down-converted photon: output facet + mean propagation + optics.

    The default filter/coupler share makes the total 7.0 dB.
    """
    return FH_FACET_LOSS_DB + FH_PROPAGATION_DB_PER_CM * propagation_cm + filter_and_coupler_db


def db_to_transmission(db: float) -> float:
    return 10.0 ** (-db / 10.0)


@dataclass(frozen=True)
class DetectionChain:
    loss_db: float = 7.0
    detector_efficiency: float = CALIBRATED_DETECTOR_EFFICIENCY
    dark_count_hz: float = 100.0
    jitter_sigma_fs: float = 10_000.0
    splitter: str = "5050"  # or "deterministic": signal -> ch1, idler -> ch2

    def __post_init__(self):
        if self.loss_db < 0:
            raise ValueError("loss must be >= 0 dB")
        if not 0.0 <= self.detector_efficiency <= 1.0:
            raise ValueError("detector efficiency must be in [0, 1]")
        if self.dark_count_hz < 0 or self.jitter_sigma_fs < 0:
            raise ValueError("dark rate and jitter must be >= 0")
        if self.splitter not in ("5050", "deterministic"):
            raise ValueError(f"splitter must be '5050' or 'deterministic', got {self.splitter!r}")

    @property
    def transmission(self) -> float:
        return db_to_transmission(self.loss_db)

    @property
    def photon_survival(self) -> float:
        return self.transmission * self.detector_efficiency

    def add_loss(self, db: float) -> "DetectionChain":
        return replace(self, loss_db=self.loss_db + db)

    @property
    def margin_fs(self) -> int:
        return int(math.ceil(JITTER_CUTOFF_SIGMA * self.jitter_sigma_fs)) + 1

    def outcome_matrix(self) -> np.ndarray:
        """P[signal outcome, idler outcome], outcomes (lost, ch1, ch2)."""
        p = self.photon_survival
        if self.splitter == "5050":
            sig = idl = np.array([1.0 - p, p / 2.0, p / 2.0])
        else:
            sig = np.array([1.0 - p, p, 0.0])
            idl = np.array([1.0 - p, 0.0, p])
        return np.outer(sig, idl)

    def click_probability(self) -> float:
        """Probability that a pair yields at least one click."""
        p = self.photon_survival
        return 1.0 - (1.0 - p) ** 2

    def coincidence_probability(self) -> float:
        """Probability that the two photons click on different channels."""
        m = self.outcome_matrix()
        return float(m[1, 2] + m[2, 1])

    def window_capture(self, window_fs: float) -> float:
        """Fraction of true coincidences whose delay falls inside a centred window."""
        if self.jitter_sigma_fs == 0:
            return 1.0
        # difference of two jitters: sigma * sqrt(2)
        return float(erf(window_fs / (4.0 * self.jitter_sigma_fs)))

    def pair_efficiency(self, window_fs: float) -> float:
        return self.coincidence_probability() * self.window_capture(window_fs)

    def singles_rate(self, pair_rate_hz: float) -> tuple[float, float]:
        """Expected click rate per channel for an emitted pair rate."""
        m = self.outcome_matrix()
        sig, idl = m.sum(axis=1), m.sum(axis=0)
        r1 = pair_rate_hz * (sig[1] + idl[1])
        r2 = pair_rate_hz * (sig[2] + idl[2])
        return r1 + self.dark_count_hz, r2 + self.dark_count_hz

    def describe(self) -> dict:
        return {"loss_db": self.loss_db, "detector_efficiency": self.detector_efficiency,
                "dark_count_hz": self.dark_count_hz, "jitter_sigma_fs": self.jitter_sigma_fs,
                "splitter": self.splitter}


_TAIL = float(ndtr(-JITTER_CUTOFF_SIGMA))


def truncated_normal(u):
    """Standard normal truncated to +-6 sigma via its inverse CDF."""
    return ndtri(_TAIL + u * (1.0 - 2.0 * _TAIL))


class DarkProcess:
    """Dark clicks on both channels, laid out in 1 s blocks over ``[0, duration)``."""

    def __init__(self, rate_hz: float, duration_fs: int, seed: int):
        self.rate_hz = rate_hz
        self.duration_fs = int(duration_fs)
        nblocks = -(-self.duration_fs // DARK_BLOCK_FS)
        self.block_start = np.arange(nblocks, dtype=np.int64) * DARK_BLOCK_FS
        self.block_width = np.minimum(DARK_BLOCK_FS, self.duration_fs - self.block_start)
        means = np.repeat(rate_hz * self.block_width / FS_PER_S, 2)
        if rate_hz > 0 and nblocks:
            counts = CounterRNG(seed, "dark_counts").generator().poisson(means)
        else:
            counts = np.zeros(2 * nblocks, dtype=np.int64)
        self.counts = counts.astype(np.int64)  # block-major, channel-minor
        self.first_id = np.concatenate([[0], np.cumsum(self.counts)])
        self._rng = CounterRNG(seed, "dark_times")

    def clicks(self, t_start_fs: int, t_stop_fs: int):
        a = max(int(t_start_fs), 0)
        b = min(int(t_stop_fs), self.duration_fs)
        if b <= a or self.rate_hz == 0:
            return np.empty(0, np.int64), np.empty(0, np.uint8)
        b0 = a // DARK_BLOCK_FS
        b1 = -(-b // DARK_BLOCK_FS)
        id0, id1 = int(self.first_id[2 * b0]), int(self.first_id[2 * b1])
        u = self._rng.uniforms(id0, id1 - id0)[:, 0]
        cells = np.repeat(np.arange(2 * b0, 2 * b1), self.counts[2 * b0:2 * b1])
        blk = cells // 2
        times = self.block_start[blk] + np.floor(u * self.block_width[blk]).astype(np.int64)
        chans = (cells % 2 + 1).astype(np.uint8)
        keep = (times >= a) & (times < b)
        return times[keep], chans[keep]


def _photon_clicks(pairs: PairBatch, chain: DetectionChain, seed: int):
    n = len(pairs)
    if n == 0:
        return np.empty(0, np.int64), np.empty(0, np.uint8)
    ids = pairs.pair_id
    lo = int(ids.min())
    rows = ids - lo
    u = CounterRNG(seed, "detect").uniforms(lo, int(ids.max()) - lo + 1)[rows]

    probs = chain.outcome_matrix().ravel()  # index = 3 * signal_outcome + idler_outcome
    if pairs.thinned_by is not None:
        if pairs.thinned_by != chain:
            raise ValueError("pair batch was thinned for a different detection chain")
        probs = probs.copy()
        probs[0] = 0.0
        total = probs.sum()
        probs = probs / total if total > 0 else probs
    cdf = np.cumsum(probs)
    cdf[-1] = 1.0
    outcome = np.minimum(np.searchsorted(cdf, u[:, 0], side="right"), 8)
    sig_ch = (outcome // 3).astype(np.uint8)
    idl_ch = (outcome % 3).astype(np.uint8)
    if pairs.signal_blocked is not None:
        sig_ch[pairs.signal_blocked] = 0
    if pairs.idler_blocked is not None:
        idl_ch[pairs.idler_blocked] = 0

    sigma = chain.jitter_sigma_fs
    t_sig = pairs.times_fs.copy()
    t_idl = pairs.times_fs.copy()
    if pairs.signal_delay_fs is not None:
        t_sig += pairs.signal_delay_fs
    if pairs.idler_delay_fs is not None:
        t_idl += pairs.idler_delay_fs
    if sigma > 0:
        t_sig += np.rint(sigma * truncated_normal(u[:, 2])).astype(np.int64)
        t_idl += np.rint(sigma * truncated_normal(u[:, 3])).astype(np.int64)
    times = np.concatenate([t_sig[sig_ch > 0], t_idl[idl_ch > 0]])
    chans = np.concatenate([sig_ch[sig_ch > 0], idl_ch[idl_ch > 0]])
    return times, chans


def detect_window(pairs: PairBatch, chain: DetectionChain, seed: int,
                  t_start_fs: int, t_stop_fs: int, darks: DarkProcess | None = None,
                  duration_s: float | None = None) -> TimeTagStream:
    """Clicks landing in ``[t_start, t_stop)``.

    ``pairs`` must contain every pair emitted within ``chain.margin_fs`` (plus
    any path delay) of the window.
    """
    times, chans = _photon_clicks(pairs, chain, seed)
    keep = (times >= t_start_fs) & (times < t_stop_fs)
    times, chans = times[keep], chans[keep]
    if darks is None:
        darks = DarkProcess(chain.dark_count_hz, pairs.duration_fs, seed)
    dt, dc = darks.clicks(t_start_fs, t_stop_fs)
    times = np.concatenate([times, dt])
    chans = np.concatenate([chans, dc])
    order = np.lexsort((chans, times))
    if duration_s is None:
        duration_s = (t_stop_fs - t_start_fs) / FS_PER_S
    return TimeTagStream(times[order], chans[order], duration_s, seed, {"chain": chain.describe()})


def detect(pairs: PairBatch, chain: DetectionChain, seed: int) -> TimeTagStream:
    """Detector clicks for a whole pair batch, time-sorted."""
    if len(pairs) > 1 and np.any(np.diff(pairs.times_fs) < 0):
        raise ValueError("pair batch must be sorted by emission time")
    a = max(pairs.t_start_fs, 0)
    b = min(pairs.t_stop_fs, pairs.duration_fs)
    return detect_window(pairs, chain, seed, a, b)


def singles_rates(tags: TimeTagStream) -> tuple[float, float]:
    if not tags.duration_s > 0:
        raise ValueError("tag stream duration must be > 0")
    n1, n2 = tags.counts()
    return n1 / tags.duration_s, n2 / tags.duration_s


def _slab_bounds(duration_fs: int, slab_fs: int):
    edges = list(range(0, duration_fs, slab_fs)) + [duration_fs]
    return list(zip(edges[:-1], edges[1:]))


def simulate_tags(spec: SourceSpec, chain: DetectionChain, power_mw: float, duration_s: float,
                  seed: int, *, franson=None, efficiency: float | None = None,
                  slab_s: float = 1.0, workers: int = 1) -> Iterator[TimeTagStream]:
    """Full source -> (Franson) -> detection pipeline, yielded one time slab at a time.

    The concatenation of the yielded slabs does not depend on ``slab_s`` or
    ``workers``. Memory stays bounded by one slab per worker.
    """
    proc = pair_process(spec, power_mw, duration_s, seed, efficiency, thinned_by=chain)
    darks = DarkProcess(chain.dark_count_hz, proc.duration_fs, seed)
    margin = chain.margin_fs
    if franson is not None:
        from .franson import transform_pairs
        margin += int(abs(franson.arm_delay_fs))
    slab_fs = max(int(round(slab_s * FS_PER_S)), 1)
    bounds = _slab_bounds(proc.duration_fs, slab_fs)

    def run(ab):
        a, b = ab
        pairs = proc.pairs(a - margin, b + margin)
        if franson is not None:
            pairs = transform_pairs(pairs, franson, seed)
        return detect_window(pairs, chain, seed, a, b, darks)

    if workers <= 1:
        for ab in bounds:
            yield run(ab)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            # chunks of `workers` slabs keep memory bounded
            for i in range(0, len(bounds), workers):
                yield from pool.map(run, bounds[i:i + workers])


def simulate_tag_stream(spec, chain, power_mw, duration_s, seed, **kw) -> TimeTagStream:
    parts = list(simulate_tags(spec, chain, power_mw, duration_s, seed, **kw))
    meta = {"chain": chain.describe(), "power_mw": power_mw}
    return TimeTagStream.concatenate(parts, duration_s=duration_s, seed=seed, meta=meta)
