"""Stochastic SPDC pair source.

Pairs are emitted as a homogeneous Poisson process. The process is laid out in
fixed 1 ms blocks: each block's pair count is drawn once per run and each pair's
random numbers are addressed by its global sequence number, so any time slab of
the run can be regenerated on its own and comes out bit-identical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterator

import numpy as np
from scipy.constants import c as C_LIGHT
from scipy.special import ndtri

from .rng import CounterRNG
from .tags import FS_PER_S

BLOCK_FS = 10 ** 12
FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))
SINC2_HALF_WIDTH = 1.3915573782515103  # sinc^2(x) = 1/2


@dataclass(frozen=True)
class SourceSpec:
    pcr_slope_hz_per_mw: float = 580.0
    center_wavelength_nm: float = 1560.0
    bandwidth_fwhm_nm: float = 30.0
    pump_wavelength_nm: float = 780.0
    pump_offset_pm: float = 0.0
    pump_coherence_time_s: float = 1e-5
    spectral_shape: str = "gaussian"
    # coincidence efficiency the slope refers to; None = derive from the detection chain in use
    collection_efficiency: float | None = None

    def __post_init__(self):
        if self.pcr_slope_hz_per_mw < 0:
            raise ValueError("pcr slope must be >= 0")
        if not self.bandwidth_fwhm_nm > 0:
            raise ValueError("bandwidth must be > 0")
        if not self.pump_coherence_time_s > 0:
            raise ValueError("pump coherence time must be > 0")
        if self.spectral_shape not in ("gaussian", "sinc2"):
            raise ValueError(f"spectral_shape must be 'gaussian' or 'sinc2', got {self.spectral_shape!r}")
        if self.collection_efficiency is not None and not 0 < self.collection_efficiency <= 1:
            raise ValueError("collection efficiency must be in (0, 1]")
        if not self.center_wavelength_nm > self.pump_nm:
            raise ValueError("signal center must be red of the pump")

    @property
    def pump_nm(self) -> float:
        return self.pump_wavelength_nm + 1e-3 * self.pump_offset_pm

    def with_offset(self, offset_pm: float) -> "SourceSpec":
        return replace(self, pump_offset_pm=float(offset_pm))


@dataclass(frozen=True)
class PairEvent:
    emission_time_fs: int
    signal_wavelength_nm: float
    idler_wavelength_nm: float
    pair_id: int


@dataclass
class PairBatch:
    """Columnar block of pair events covering ``[t_start_fs, t_stop_fs)``.

    ``thinned_by`` is set when the batch only holds pairs that produce at least
    one click in that detection chain (see :func:`generate_pairs`).
    """

    times_fs: np.ndarray
    signal_nm: np.ndarray
    idler_nm: np.ndarray
    pair_id: np.ndarray
    t_start_fs: int
    t_stop_fs: int
    duration_fs: int
    pump_nm: float
    signal_delay_fs: np.ndarray | None = None
    idler_delay_fs: np.ndarray | None = None
    thinned_by: object = None
    # photons routed away from the detectors (e.g. an unmonitored analyzer port)
    signal_blocked: np.ndarray | None = None
    idler_blocked: np.ndarray | None = None

    def __len__(self):
        return self.times_fs.size

    def __iter__(self) -> Iterator[PairEvent]:
        for t, s, i, k in zip(self.times_fs.tolist(), self.signal_nm.tolist(),
                              self.idler_nm.tolist(), self.pair_id.tolist()):
            yield PairEvent(t, s, i, k)

    def take(self, mask_or_index) -> "PairBatch":
        sel = lambda a: None if a is None else a[mask_or_index]
        return replace(self, times_fs=self.times_fs[mask_or_index], signal_nm=self.signal_nm[mask_or_index],
                       idler_nm=self.idler_nm[mask_or_index], pair_id=self.pair_id[mask_or_index],
                       signal_delay_fs=sel(self.signal_delay_fs), idler_delay_fs=sel(self.idler_delay_fs),
                       signal_blocked=sel(self.signal_blocked), idler_blocked=sel(self.idler_blocked))


def default_collection_efficiency() -> float:
    """Coincidence efficiency of the default detection chain and coincidence window."""
    from .coincidence import HistogramConfig
    from .detection import DetectionChain
    return DetectionChain().pair_efficiency(HistogramConfig().coincidence_window_fs)


def emitted_rate_hz(spec: SourceSpec, power_mw: float, efficiency: float | None = None) -> float:
    """On-chip pair emission rate that yields ``slope * power`` detected coincidences."""
    if power_mw < 0:
        raise ValueError("pump power must be >= 0")
    eff = spec.collection_efficiency or efficiency or default_collection_efficiency()
    return spec.pcr_slope_hz_per_mw * power_mw / eff


def idler_wavelength(signal_nm, pump_nm):
    """Energy conservation 1/l_s + 1/l_i = 1/l_p."""
    return 1.0 / (1.0 / pump_nm - 1.0 / np.asarray(signal_nm))


_SINC2_TABLE = None


def _sinc2_quantile(u):
    global _SINC2_TABLE
    if _SINC2_TABLE is None:
        x = np.linspace(-40 * np.pi, 40 * np.pi, 400001)
        dens = np.sinc(x / np.pi) ** 2
        cdf = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(x))])
        _SINC2_TABLE = (cdf / cdf[-1], x)
    cdf, x = _SINC2_TABLE
    return np.interp(u, cdf, x)


def sample_signal_wavelength(spec: SourceSpec, u):
    if spec.spectral_shape == "gaussian":
        return spec.center_wavelength_nm + spec.bandwidth_fwhm_nm / FWHM_PER_SIGMA * ndtri(u)
    return spec.center_wavelength_nm + _sinc2_quantile(u) * spec.bandwidth_fwhm_nm / (2.0 * SINC2_HALF_WIDTH)


class PairProcess:
    """Block layout of one seeded Poisson pair stream over ``[0, duration)``."""

    def __init__(self, spec: SourceSpec, rate_hz: float, duration_s: float, seed: int,
                 thinned_by=None):
        if not duration_s > 0:
            raise ValueError("duration must be > 0")
        if rate_hz < 0:
            raise ValueError("rate must be >= 0")
        self.spec = spec
        self.rate_hz = rate_hz
        self.seed = seed
        self.thinned_by = thinned_by
        self.duration_fs = int(round(duration_s * FS_PER_S))
        nblocks = -(-self.duration_fs // BLOCK_FS)
        self.block_start = np.arange(nblocks, dtype=np.int64) * BLOCK_FS
        self.block_width = np.minimum(BLOCK_FS, self.duration_fs - self.block_start)
        means = rate_hz * self.block_width / FS_PER_S
        if rate_hz > 0:
            counts = CounterRNG(seed, "pair_counts").generator().poisson(means)
        else:
            counts = np.zeros(nblocks, dtype=np.int64)
        self.counts = counts.astype(np.int64)
        self.first_id = np.concatenate([[0], np.cumsum(self.counts)])
        self._rng = CounterRNG(seed, "pairs")

    @property
    def total(self) -> int:
        return int(self.first_id[-1])

    def pairs(self, t_start_fs: int, t_stop_fs: int) -> PairBatch:
        """All pairs emitted in ``[t_start, t_stop)``, clipped to the run."""
        a = max(int(t_start_fs), 0)
        b = min(int(t_stop_fs), self.duration_fs)
        pump = self.spec.pump_nm
        if b <= a:
            e = np.empty(0)
            return PairBatch(np.empty(0, np.int64), e, e.copy(), np.empty(0, np.int64),
                             int(t_start_fs), int(t_stop_fs), self.duration_fs, pump,
                             thinned_by=self.thinned_by)
        b0 = a // BLOCK_FS
        b1 = -(-b // BLOCK_FS)
        id0, id1 = int(self.first_id[b0]), int(self.first_id[b1])
        u = self._rng.uniforms(id0, id1 - id0)
        blk = np.repeat(np.arange(b0, b1), self.counts[b0:b1])
        times = self.block_start[blk] + np.floor(u[:, 0] * self.block_width[blk]).astype(np.int64)
        order = np.argsort(times, kind="stable")
        times = times[order]
        ids = np.arange(id0, id1, dtype=np.int64)
        signal = sample_signal_wavelength(self.spec, u[order, 1])
        keep = (times >= a) & (times < b)
        signal = signal[keep]
        return PairBatch(times[keep], signal, idler_wavelength(signal, pump), ids[keep],
                         int(t_start_fs), int(t_stop_fs), self.duration_fs, pump,
                         thinned_by=self.thinned_by)


def pair_process(spec: SourceSpec, power_mw: float, duration_s: float, seed: int,
                 efficiency: float | None = None, thinned_by=None) -> PairProcess:
    rate = emitted_rate_hz(spec, power_mw, efficiency)
    if thinned_by is not None:
        rate *= thinned_by.click_probability()
    return PairProcess(spec, rate, duration_s, seed, thinned_by)


def generate_pairs(spec: SourceSpec, power_mw: float, duration_s: float, seed: int,
                   efficiency: float | None = None, thinned_by=None) -> PairBatch:
    """Emitted pairs over ``[0, duration)`` for a pump power in mW.

    With ``thinned_by=chain`` only pairs giving at least one click in ``chain``
    are produced (rate scaled by the click probability); ``detect`` then samples
    the click pattern conditionally, which is statistically identical to
    detecting the full stream and much cheaper at low collection efficiency.
    """
    proc = pair_process(spec, power_mw, duration_s, seed, efficiency, thinned_by)
    return proc.pairs(0, proc.duration_fs)


def bandwidth_nm_to_mhz(bandwidth_nm: float, center_nm: float) -> float:
    return C_LIGHT * bandwidth_nm * 1e-9 / (center_nm * 1e-9) ** 2 / 1e6


def internal_brightness(detected_pcr_hz: float, power_mw: float, bandwidth_mhz: float,
                        loss_db: float) -> float:
    """Loss-corrected pair flux per mW of pump per MHz of bandwidth."""
    if not (power_mw > 0 and bandwidth_mhz > 0):
        raise ValueError("power and bandwidth must be > 0")
    if detected_pcr_hz < 0:
        raise ValueError("pair rate must be >= 0")
    return detected_pcr_hz * 10.0 ** (loss_db / 10.0) / (power_mw * bandwidth_mhz)
