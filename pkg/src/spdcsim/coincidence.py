"""Streaming start-stop correlation, CAR / PCR extraction and power scans."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _core
from .detection import DetectionChain, simulate_tags
from .fitting import fit_inverse_law
from .source import SourceSpec, emitted_rate_hz
from .tags import OrderingError, TimeTagStream


class EmptyHistogramError(ValueError):
    pass


@dataclass(frozen=True)
class HistogramConfig:
    bin_width_fs: int = 2_000
    span_fs: int = 500_000
    coincidence_window_fs: int = 50_000
    # total width of the two side windows, before normalisation
    accidental_window_total_fs: int = 240_000
    # inner edge of each side window, in coincidence windows from the peak centre
    accidental_offset_windows: float = 5.0

    def __post_init__(self):
        bw = self.bin_width_fs
        if bw <= 0 or self.span_fs <= 0:
            raise ValueError("bin width and span must be > 0")
        for name in ("span_fs", "coincidence_window_fs"):
            if getattr(self, name) % bw:
                raise ValueError(f"bin width {bw} fs does not divide {name}={getattr(self, name)}")
        if self.accidental_window_total_fs % (2 * bw):
            raise ValueError("bin width must divide each half of the accidental window")
        if self.coincidence_window_fs > self.span_fs:
            raise ValueError("coincidence window exceeds the histogram span")
        reach = self.accidental_gap_fs + self.accidental_window_total_fs // 2 + 2 * self.coincidence_window_fs
        if reach > self.span_fs:
            raise ValueError("accidental windows do not fit inside the histogram span")

    @property
    def nbins(self) -> int:
        return 2 * self.span_fs // self.bin_width_fs

    @property
    def accidental_gap_fs(self) -> int:
        """Gap between a coincidence-window edge and the inner edge of a side window."""
        gap = int(round(self.accidental_offset_windows * self.coincidence_window_fs)) - self.coincidence_window_fs // 2
        return max(gap + (-gap) % self.bin_width_fs, 0)  # rounded outwards


@dataclass
class CoincidenceHistogram:
    counts: np.ndarray
    config: HistogramConfig
    duration_s: float
    singles: tuple[int, int] = (0, 0)

    @property
    def bin_centers_fs(self) -> np.ndarray:
        bw = self.config.bin_width_fs
        return -self.config.span_fs + bw * np.arange(self.counts.size) + bw / 2.0

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def edge_index(self, delay_fs: float) -> int:
        """Index of the bin edge at ``delay_fs``; it must lie exactly on an edge."""
        pos = (delay_fs + self.config.span_fs) / self.config.bin_width_fs
        k = int(round(pos))
        if abs(pos - k) > 1e-9:
            raise ValueError(f"{delay_fs} fs is not on a bin edge")
        return k

    def counts_between(self, lo_fs: float, hi_fs: float) -> int:
        """Counts with delay in ``[lo, hi)``; both limits on bin edges inside the span."""
        a, b = self.edge_index(lo_fs), self.edge_index(hi_fs)
        if a < 0 or b > self.counts.size or a > b:
            raise ValueError(f"window [{lo_fs}, {hi_fs}) fs outside the histogram")
        return int(self.counts[a:b].sum())

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["delay_fs", "counts"])
            for d, c in zip(self.bin_centers_fs.tolist(), self.counts.tolist()):
                w.writerow([repr(d), c])

    def merged(self, other: "CoincidenceHistogram") -> "CoincidenceHistogram":
        if other.config != self.config:
            raise ValueError("cannot merge histograms with different configs")
        return CoincidenceHistogram(self.counts + other.counts, self.config,
                                    self.duration_s + other.duration_s,
                                    (self.singles[0] + other.singles[0], self.singles[1] + other.singles[1]))


class Correlator:
    """Single-pass ch1 -> ch2 delay histogram over a tag stream fed in chunks.

    Only the ch1 tags still waiting for partners (the last ``span``) and the ch2
    tags that can still pair with them are buffered.
    """

    def __init__(self, cfg: HistogramConfig | None = None):
        self.cfg = cfg or HistogramConfig()
        self.hist = np.zeros(self.cfg.nbins, dtype=np.int64)
        self._pending1 = np.empty(0, np.int64)
        self._buf2 = np.empty(0, np.int64)
        self._last = None
        self.n1 = 0
        self.n2 = 0

    def feed(self, tags: TimeTagStream) -> "Correlator":
        t = tags.times_fs
        if t.size == 0:
            return self
        if not _core.is_sorted(t):
            raise OrderingError("time tags are not sorted")
        if self._last is not None and t[0] < self._last:
            raise OrderingError("chunk starts before the end of the previous chunk")
        ch = tags.channels
        bad = (ch != 1) & (ch != 2)
        if np.any(bad):
            raise ValueError(f"invalid channels {np.unique(ch[bad])}")
        t1 = t[ch == 1]
        t2 = t[ch == 2]
        self.n1 += t1.size
        self.n2 += t2.size
        self._last = int(t[-1])
        self._pending1 = np.concatenate([self._pending1, t1])
        self._buf2 = np.concatenate([self._buf2, t2])
        span = self.cfg.span_fs
        # later ch2 tags are >= _last, so these ch1 tags have seen all partners
        n_ready = int(np.searchsorted(self._pending1, self._last - span, side="right"))
        if n_ready:
            self._run(self._pending1[:n_ready])
            self._pending1 = self._pending1[n_ready:]
        floor = (self._pending1[0] if self._pending1.size else self._last) - span
        self._buf2 = self._buf2[np.searchsorted(self._buf2, floor, side="left"):]
        return self

    def _run(self, t1):
        _core.correlate_into(np.ascontiguousarray(t1), np.ascontiguousarray(self._buf2),
                             self.cfg.span_fs, self.cfg.bin_width_fs, self.hist)

    def result(self, duration_s: float) -> CoincidenceHistogram:
        if self._pending1.size:
            self._run(self._pending1)
            self._pending1 = np.empty(0, np.int64)
        return CoincidenceHistogram(self.hist.copy(), self.cfg, duration_s, (self.n1, self.n2))


def correlate(tags: TimeTagStream, cfg: HistogramConfig | None = None) -> CoincidenceHistogram:
    """Histogram of t2 - t1 over [-span, span) for all ch1/ch2 tag pairs."""
    return Correlator(cfg).feed(tags).result(tags.duration_s)


@dataclass
class CarResult:
    car: float
    pcr_hz: float
    coincidences: int
    accidentals: float
    raw_accidentals: int
    lower_bound: bool
    peak_center_fs: float
    car_sigma: float

    def to_dict(self):
        return asdict(self)


def locate_peak(h: CoincidenceHistogram) -> float:
    """Peak delay: best coincidence-window position, refined by the centroid inside it.

    The search is limited to delays whose side accidental windows still fit in the span.
    """
    cfg = h.config
    nw = max(cfg.coincidence_window_fs // cfg.bin_width_fs, 1)
    smooth = np.convolve(h.counts, np.ones(nw, dtype=np.int64), mode="same")
    reach = cfg.accidental_gap_fs + cfg.accidental_window_total_fs // 2 + cfg.coincidence_window_fs
    limit = max(cfg.span_fs - reach, 0)
    smooth[np.abs(h.bin_centers_fs) > limit] = -1
    k = int(np.argmax(smooth))
    a, b = max(k - nw // 2, 0), min(k + nw // 2 + 1, h.counts.size)
    w = h.counts[a:b].astype(float)
    centers = h.bin_centers_fs[a:b]
    return float(np.dot(w, centers) / w.sum()) if w.sum() > 0 else float(centers[len(centers) // 2])


def _snap_window(h: CoincidenceHistogram, center_fs: float, width_fs: int) -> tuple[float, float]:
    """Window of ``width_fs`` on bin edges, centred as close as possible to ``center_fs``."""
    cfg = h.config
    bw = cfg.bin_width_fs
    nbins = width_fs // bw
    if nbins % 2 == 0:
        c = round((center_fs + cfg.span_fs) / bw) * bw - cfg.span_fs
    else:
        c = (math.floor((center_fs + cfg.span_fs) / bw) + 0.5) * bw - cfg.span_fs
    return c - width_fs / 2.0, c + width_fs / 2.0


def car_pcr(h: CoincidenceHistogram) -> CarResult:
    """CAR = C_C / A_C and PCR = C_C / duration from a coincidence histogram.

    With no accidental counts observed, A_C is taken as 1 and ``lower_bound`` is set.
    """
    if h.total == 0:
        raise EmptyHistogramError("histogram has no counts")
    cfg = h.config
    center = locate_peak(h)
    lo, hi = _snap_window(h, center, cfg.coincidence_window_fs)
    mid = (lo + hi) / 2.0
    cc = h.counts_between(lo, hi)
    gap = cfg.accidental_gap_fs
    half = cfg.accidental_window_total_fs // 2
    raw = h.counts_between(hi + gap, hi + gap + half) + h.counts_between(lo - gap - half, lo - gap)
    scale = cfg.coincidence_window_fs / cfg.accidental_window_total_fs
    if raw == 0:
        acc, bound = 1.0, True
    else:
        acc, bound = raw * scale, False
    car = cc / acc
    sigma = car * math.sqrt((1.0 / cc if cc else 0.0) + 1.0 / max(raw, 1))
    pcr = cc / h.duration_s if h.duration_s > 0 else float("nan")
    return CarResult(car, pcr, cc, acc, raw, bound, mid, sigma)


def predicted_car(spec: SourceSpec, chain: DetectionChain, cfg: HistogramConfig,
                  power_mw: float, efficiency: float | None = None) -> tuple[float, float]:
    """Closed-form (CAR, PCR) for independent Poisson pairs plus dark counts."""
    w = cfg.coincidence_window_fs * 1e-15
    rate = emitted_rate_hz(spec, power_mw, efficiency)
    true_rate = rate * chain.pair_efficiency(cfg.coincidence_window_fs)
    r1, r2 = chain.singles_rate(rate)
    acc = r1 * r2 * w
    if acc == 0:
        return math.inf, true_rate
    return (true_rate + acc) / acc, true_rate + acc


@dataclass
class ScanRow:
    power_mw: float
    duration_s: float
    pcr_hz: float
    car: float
    car_pred: float
    car_pred_sigma: float
    lower_bound: bool
    singles1_hz: float
    singles2_hz: float
    coincidences: int
    raw_accidentals: int


@dataclass
class ScanTable:
    rows: list[ScanRow] = field(default_factory=list)

    def column(self, name):
        return np.array([getattr(r, name) for r in self.rows])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["power_mw", "pcr_hz", "car", "car_pred"])
            for r in self.rows:
                w.writerow([repr(float(r.power_mw)), repr(float(r.pcr_hz)), repr(float(r.car)),
                            repr(float(r.car_pred))])

    def to_json(self) -> str:
        return json.dumps([asdict(r) for r in self.rows], indent=2, sort_keys=True)

    def fit_inverse_law(self):
        """Power-law fit over the rows that have observed accidentals."""
        pts = [(r.pcr_hz, r.car) for r in self.rows if not r.lower_bound and r.pcr_hz > 0]
        return fit_inverse_law(pts)


def point_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([int(seed), int(index)]).generate_state(1, dtype=np.uint64)[0] >> 1)


def measure_point(spec, chain, power_mw, duration_s, seed, cfg=None, *, franson=None,
                  slab_s=1.0, workers=1) -> CoincidenceHistogram:
    """Simulate one acquisition and correlate it slab by slab."""
    cfg = cfg or HistogramConfig()
    corr = Correlator(cfg)
    for part in simulate_tags(spec, chain, power_mw, duration_s, seed, franson=franson,
                              slab_s=slab_s, workers=workers):
        corr.feed(part)
    return corr.result(duration_s)


def car_scan(spec: SourceSpec, chain: DetectionChain, powers_mw, duration_s, seed: int = 0,
             cfg: HistogramConfig | None = None, slab_s: float = 1.0, workers: int = 1) -> ScanTable:
    """CAR and PCR versus pump power, each point with the closed-form prediction.

    ``duration_s`` is a scalar or one duration per power. ``car_pred`` uses the
    measured singles: C_rate / (R1 R2 w).
    """
    cfg = cfg or HistogramConfig()
    powers = [float(p) for p in powers_mw]
    if any(p <= 0 for p in powers):
        raise ValueError("scan powers must be > 0")
    durations = ([float(duration_s)] * len(powers) if np.isscalar(duration_s)
                 else [float(d) for d in duration_s])
    if len(durations) != len(powers):
        raise ValueError("need one duration per power")
    w = cfg.coincidence_window_fs * 1e-15
    table = ScanTable()
    for i, (p, dur) in enumerate(zip(powers, durations)):
        h = measure_point(spec, chain, p, dur, point_seed(seed, i), cfg, slab_s=slab_s, workers=workers)
        res = car_pcr(h)
        r1, r2 = h.singles[0] / dur, h.singles[1] / dur
        acc_rate = r1 * r2 * w
        if acc_rate > 0:
            pred = res.pcr_hz / acc_rate
            raw_expected = r1 * r2 * cfg.accidental_window_total_fs * 1e-15 * dur
            pred_sigma = pred / math.sqrt(raw_expected) if raw_expected > 0 else math.inf
        else:
            pred, pred_sigma = math.inf, math.inf
        table.rows.append(ScanRow(p, dur, res.pcr_hz, res.car, pred, pred_sigma, res.lower_bound,
                                  r1, r2, res.coincidences, res.raw_accidentals))
    return table
