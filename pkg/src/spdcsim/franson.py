"""Folded Franson analyzer: three-peak histograms and pump-offset fringes.

Each photon passes an unbalanced interferometer with short (S) and long (L)
paths, picking up amplitude 1/2 per path at the monitored port. The |SS> and
|LL> pair amplitudes arrive together and interfere; |SL> and |LS> form the two
side peaks.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.constants import c as C_LIGHT

from .coincidence import (CoincidenceHistogram, Correlator, HistogramConfig, point_seed)
from .detection import DetectionChain, simulate_tags
from .rng import CounterRNG
from .source import PairBatch, SourceSpec, emitted_rate_hz

REFERENCE_PUMP_NM = 779.75
CONSTRUCTIVE_OFFSET_PM = 7.35
DEFAULT_FRINGE_PERIOD_PM = 6.6
DEFAULT_PHASE0 = math.remainder(-2.0 * math.pi * CONSTRUCTIVE_OFFSET_PM / DEFAULT_FRINGE_PERIOD_PM,
                                2.0 * math.pi)


@dataclass(frozen=True)
class FransonConfig:
    arm_delay_fs: int = 30_000
    fringe_period_pm: float = DEFAULT_FRINGE_PERIOD_PM
    pump_offset_pm: float = 0.0
    reference_pump_nm: float = REFERENCE_PUMP_NM
    phase0_rad: float = DEFAULT_PHASE0
    intrinsic_visibility: float = 1.0
    single_photon_coherence_fs: float = 270.0
    pump_coherence_fs: float = 1e10

    def __post_init__(self):
        if self.arm_delay_fs < 0 or int(self.arm_delay_fs) != self.arm_delay_fs:
            raise ValueError("arm delay must be a non-negative integer number of fs")
        if not self.fringe_period_pm > 0:
            raise ValueError("fringe period must be > 0")
        if not 0.0 <= self.intrinsic_visibility <= 1.0:
            raise ValueError("intrinsic visibility must be in [0, 1]")
        if self.single_photon_coherence_fs < 0 or self.pump_coherence_fs <= 0:
            raise ValueError("coherence times must be positive")

    @property
    def coherence_ok(self) -> bool:
        """Single-photon coherence < arm delay < pump coherence."""
        return self.single_photon_coherence_fs < self.arm_delay_fs < self.pump_coherence_fs

    @property
    def effective_visibility(self) -> float:
        return self.intrinsic_visibility if self.coherence_ok else 0.0

    def phase(self, offset_pm: float | None = None) -> float:
        off = self.pump_offset_pm if offset_pm is None else offset_pm
        return 2.0 * math.pi * off / self.fringe_period_pm + self.phase0_rad

    def at_offset(self, offset_pm: float) -> "FransonConfig":
        return replace(self, pump_offset_pm=float(offset_pm))

    @property
    def pump_nm(self) -> float:
        return self.reference_pump_nm + 1e-3 * self.pump_offset_pm


def fringe_period_from_delay(arm_delay_fs: float, pump_nm: float = REFERENCE_PUMP_NM) -> float:
    """Pump-wavelength period (pm) of a phase 2 pi c tau / lambda_p."""
    if not arm_delay_fs > 0:
        raise ValueError("arm delay must be > 0")
    lam = pump_nm * 1e-9
    return lam * lam / (C_LIGHT * arm_delay_fs * 1e-15) * 1e12


@dataclass(frozen=True)
class FransonOutcome:
    early: float
    central: float
    late: float

    @property
    def dropped(self) -> float:
        return 1.0 - (self.early + self.central + self.late)

    def as_array(self) -> np.ndarray:
        """(early, central, late, dropped)."""
        return np.array([self.early, self.central, self.late, self.dropped])


def outcome_probabilities(cfg: FransonConfig) -> FransonOutcome:
    v = cfg.effective_visibility
    central = (2.0 + 2.0 * v * math.cos(cfg.phase())) / 16.0
    return FransonOutcome(1.0 / 16.0, max(central, 0.0), 1.0 / 16.0)


def port_probabilities(cfg: FransonConfig) -> tuple[float, float, float, float]:
    """P(both photons, signal only, idler only, neither) reach a monitored port.

    Each photon alone exits the monitored port with probability 1/2; only the
    joint probability carries the interference term.
    """
    both = sum(outcome_probabilities(cfg).as_array()[:3])
    one = max(0.5 - both, 0.0)
    return both, one, one, max(1.0 - both - 2.0 * one, 0.0)


def transform_pairs(pairs: PairBatch, cfg: FransonConfig, seed: int) -> PairBatch:
    """Sample each pair's analyzer outcome and attach the path delays.

    When both photons reach the monitored ports, early is (signal, idler) =
    (0, delay), late is (delay, 0) and central is (0, 0) or (delay, delay)
    with equal odds. A photon leaving through the other port is marked
    blocked; pairs with both photons blocked are removed. Randomness is keyed
    by pair id.
    """
    n = len(pairs)
    if n == 0:
        z = np.empty(0, np.int64)
        b = np.empty(0, bool)
        return replace(pairs, signal_delay_fs=z, idler_delay_fs=z.copy(), signal_blocked=b,
                       idler_blocked=b.copy())
    if n > 1 and np.any(np.diff(pairs.times_fs) < 0):
        raise ValueError("pairs must be sorted by emission time")
    lo = int(pairs.pair_id.min())
    u = CounterRNG(seed, "franson").uniforms(lo, int(pairs.pair_id.max()) - lo + 1)[pairs.pair_id - lo]
    p = outcome_probabilities(cfg)
    _, one_s, one_i, _ = port_probabilities(cfg)
    cdf = np.cumsum([p.early, p.central, p.late, one_s, one_i])
    # 0 early, 1 central, 2 late, 3 signal only, 4 idler only, 5 neither
    kind = np.searchsorted(cdf, u[:, 0], side="right")
    keep = kind < 5
    kind, u1 = kind[keep], u[keep, 1]
    d = np.int64(cfg.arm_delay_fs)
    coin = u1 < 0.5
    long_sig = (kind == 2) | ((kind == 1) & coin) | ((kind == 3) & coin)
    long_idl = (kind == 0) | ((kind == 1) & coin) | ((kind == 4) & coin)
    out = pairs.take(keep)
    return replace(out, signal_delay_fs=np.where(long_sig, d, 0).astype(np.int64),
                   idler_delay_fs=np.where(long_idl, d, 0).astype(np.int64),
                   signal_blocked=kind == 4, idler_blocked=kind == 3)


def histogram_config(cfg: FransonConfig) -> HistogramConfig:
    """Fine-binned histogram whose edges fall on +-delay/2 and +-3 delay/2."""
    half = cfg.arm_delay_fs // 2
    bw = math.gcd(half, 1000) if half else 1000
    span = max(500_000, 4 * cfg.arm_delay_fs)
    span += (-span) % bw
    window = max(cfg.arm_delay_fs - cfg.arm_delay_fs % (2 * bw), 2 * bw)
    return HistogramConfig(bin_width_fs=bw, span_fs=span, coincidence_window_fs=window,
                           accidental_window_total_fs=4 * bw * 30)


@dataclass(frozen=True)
class PeakCounts:
    early: int
    central: int
    late: int


def peak_counts(h: CoincidenceHistogram, cfg: FransonConfig) -> PeakCounts:
    """Counts in the analyzer windows of width ``delay`` centred at 0 and +-delay."""
    d = cfg.arm_delay_fs
    if d < 2 * h.config.bin_width_fs or d % 2:
        raise ValueError("arm delay too short to separate the three peaks")
    half = d // 2
    return PeakCounts(early=h.counts_between(half, 3 * half),
                      central=h.counts_between(-half, half),
                      late=h.counts_between(-3 * half, -half))


def three_peak_histogram(spec: SourceSpec, chain: DetectionChain, cfg: FransonConfig,
                         power_mw: float, duration_s: float, seed: int,
                         hcfg: HistogramConfig | None = None, slab_s: float = 1.0,
                         workers: int = 1) -> CoincidenceHistogram:
    _check_source(spec, cfg)
    spec = _spec_for(spec, cfg)
    hcfg = hcfg or histogram_config(cfg)
    corr = Correlator(hcfg)
    for part in simulate_tags(spec, chain, power_mw, duration_s, seed, franson=cfg,
                              slab_s=slab_s, workers=workers):
        corr.feed(part)
    return corr.result(duration_s)


def _spec_for(spec: SourceSpec, cfg: FransonConfig) -> SourceSpec:
    return replace(spec, pump_wavelength_nm=cfg.reference_pump_nm, pump_offset_pm=cfg.pump_offset_pm)


def _check_source(spec: SourceSpec, cfg: FransonConfig) -> None:
    if not spec.pump_coherence_time_s * 1e15 > cfg.arm_delay_fs:
        raise ValueError("pump coherence time must exceed the analyzer arm delay")


def expected_peaks(spec: SourceSpec, chain: DetectionChain, cfg: FransonConfig,
                   power_mw: float, duration_s: float,
                   accidentals: bool = True) -> tuple[float, float, float]:
    """Mean (early, central, late) window counts."""
    rate = emitted_rate_hz(spec, power_mw)
    probs = outcome_probabilities(cfg)
    m = chain.outcome_matrix()
    coinc = float(m[1, 2] + m[2, 1])
    cap = chain.window_capture(cfg.arm_delay_fs)
    sig, idl = m.sum(axis=1), m.sum(axis=0)
    r1 = rate * 0.5 * (sig[1] + idl[1]) + chain.dark_count_hz
    r2 = rate * 0.5 * (sig[2] + idl[2]) + chain.dark_count_hz
    acc = r1 * r2 * cfg.arm_delay_fs * 1e-15 * duration_s if accidentals else 0.0
    n = rate * coinc * cap * duration_s
    return n * probs.early + acc, n * probs.central + acc, n * probs.late + acc


@dataclass
class FringeRow:
    offset_pm: float
    central_counts: float
    side_early: float
    side_late: float


@dataclass
class FringeTable:
    rows: list[FringeRow] = field(default_factory=list)
    mode: str = "mc"

    def column(self, name):
        return np.array([getattr(r, name) for r in self.rows], dtype=float)

    def points(self):
        return [(r.offset_pm, r.central_counts) for r in self.rows]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["offset_pm", "central_counts", "side_early", "side_late"])
            for r in self.rows:
                w.writerow([repr(float(r.offset_pm)), _num(r.central_counts), _num(r.side_early),
                            _num(r.side_late)])

    def to_json(self) -> str:
        return json.dumps({"mode": self.mode, "rows": [asdict(r) for r in self.rows]},
                          indent=2, sort_keys=True)

    @classmethod
    def read_csv(cls, path) -> "FringeTable":
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            need = {"offset_pm", "central_counts"}
            if reader.fieldnames is None or not need <= set(reader.fieldnames):
                raise ValueError(f"{path}: expected columns offset_pm,central_counts")
            rows = [FringeRow(float(r["offset_pm"]), float(r["central_counts"]),
                              float(r.get("side_early") or "nan"), float(r.get("side_late") or "nan"))
                    for r in reader]
        return cls(rows, mode="file")


def _num(x):
    x = float(x)
    return str(int(x)) if x.is_integer() else repr(x)


def fringe_scan(spec: SourceSpec, chain: DetectionChain, cfg: FransonConfig, offsets_pm,
                duration_s: float, seed: int = 0, *, mode: str = "mc", power_mw: float = 0.1,
                slab_s: float = 1.0, workers: int = 1, accidentals: bool = True) -> FringeTable:
    """Central and side peak counts versus pump offset.

    ``mode``: ``"mc"`` runs the full photon-level pipeline per offset,
    ``"analytic"`` returns expected counts, ``"poisson"`` Poisson-samples them;
    ``accidentals=False`` leaves out the uncorrelated background in those two.
    """
    if mode not in ("mc", "analytic", "poisson"):
        raise ValueError(f"unknown fringe scan mode {mode!r}")
    offsets = [float(o) for o in offsets_pm]
    if not offsets or max(offsets) - min(offsets) < cfg.fringe_period_pm * (1 - 1e-9):
        raise ValueError("offsets must span at least one fringe period")
    _check_source(spec, cfg)
    table = FringeTable(mode=mode)
    gen = CounterRNG(seed, "fringe_noise").generator() if mode == "poisson" else None
    for i, off in enumerate(offsets):
        c = cfg.at_offset(off)
        if mode == "mc":
            h = three_peak_histogram(spec, chain, c, power_mw, duration_s, point_seed(seed, i),
                                     slab_s=slab_s, workers=workers)
            pk = peak_counts(h, c)
            table.rows.append(FringeRow(off, pk.central, pk.early, pk.late))
        else:
            e, ce, la = expected_peaks(_spec_for(spec, c), chain, c, power_mw, duration_s, accidentals)
            if gen is not None:
                e, ce, la = (int(v) for v in gen.poisson([e, ce, la]))
            table.rows.append(FringeRow(off, ce, e, la))
    return table
