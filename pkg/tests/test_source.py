import math

import numpy as np
import pytest
from scipy import integrate, stats

from spdcsim.coincidence import HistogramConfig
from spdcsim.detection import DetectionChain
from spdcsim.source import (PairProcess, SourceSpec, bandwidth_nm_to_mhz, emitted_rate_hz,
                            generate_pairs, idler_wavelength, internal_brightness)

SPEC = SourceSpec()


def test_zero_power_gives_empty_stream():
    pairs = generate_pairs(SPEC, 0.0, 1.0, seed=1)
    assert len(pairs) == 0


def test_negative_power_rejected():
    with pytest.raises(ValueError):
        generate_pairs(SPEC, -1.0, 1.0, seed=1)
    with pytest.raises(ValueError):
        generate_pairs(SPEC, 1.0, 0.0, seed=1)


def test_spec_invariants():
    with pytest.raises(ValueError):
        SourceSpec(bandwidth_fwhm_nm=0.0)
    with pytest.raises(ValueError):
        SourceSpec(pcr_slope_hz_per_mw=-1.0)
    with pytest.raises(ValueError):
        SourceSpec(spectral_shape="lorentzian")


def test_interarrival_exponential():
    rate = 1e6
    proc = PairProcess(SPEC, rate, 1.0, seed=5)
    t = proc.pairs(0, proc.duration_fs).times_fs
    assert abs(t.size - rate) < 5 * math.sqrt(rate)
    gaps = np.diff(t) / 1e15
    assert gaps.mean() == pytest.approx(1 / rate, rel=5e-3)
    assert stats.kstest(gaps * rate, "expon").pvalue > 0.01


def test_counts_are_poisson():
    counts = [len(PairProcess(SPEC, 2e4, 0.01, seed=s).pairs(0, 10 ** 13)) for s in range(300)]
    mean, var = np.mean(counts), np.var(counts, ddof=1)
    assert mean == pytest.approx(200, abs=4 * math.sqrt(200 / 300))
    assert 0.75 < var / mean < 1.3


def test_energy_conservation_and_spectrum():
    pairs = generate_pairs(SPEC, 0.5, 0.2, seed=2, efficiency=1e-3)
    assert len(pairs) > 50_000
    inv = 1 / pairs.signal_nm + 1 / pairs.idler_nm
    assert np.max(np.abs(inv * pairs.pump_nm - 1)) < 1e-12
    sigma = 30.0 / (2 * math.sqrt(2 * math.log(2)))
    assert np.std(pairs.signal_nm) == pytest.approx(sigma, rel=0.01)
    assert np.mean(pairs.signal_nm) == pytest.approx(1560.0, abs=0.2)
    assert np.all(np.diff(pairs.times_fs) >= 0)


def test_sinc2_spectrum_half_width():
    spec = SourceSpec(spectral_shape="sinc2")
    pairs = generate_pairs(spec, 0.5, 0.1, seed=3, efficiency=1e-3)
    half = 1.3915573782515103
    inside, _ = integrate.quad(lambda x: (math.sin(x) / x) ** 2 if x else 1.0, -half, half, limit=200)
    frac = np.mean(np.abs(pairs.signal_nm - 1560.0) < 15.0)
    assert frac == pytest.approx(inside / math.pi, abs=0.01)


def test_pair_ids_and_slabs_are_partition_independent():
    proc = PairProcess(SPEC, 3e5, 0.05, seed=8)
    whole = proc.pairs(0, proc.duration_fs)
    edges = [0, 7 * 10 ** 11, 10 ** 12 + 3, 3 * 10 ** 13 + 17, proc.duration_fs]
    parts = [proc.pairs(a, b) for a, b in zip(edges[:-1], edges[1:])]
    assert np.array_equal(whole.times_fs, np.concatenate([p.times_fs for p in parts]))
    assert np.array_equal(whole.pair_id, np.concatenate([p.pair_id for p in parts]))
    assert np.array_equal(whole.signal_nm, np.concatenate([p.signal_nm for p in parts]))


def test_seed_determinism():
    a = generate_pairs(SPEC, 0.1, 0.05, seed=4, efficiency=1e-3)
    b = generate_pairs(SPEC, 0.1, 0.05, seed=4, efficiency=1e-3)
    c = generate_pairs(SPEC, 0.1, 0.05, seed=5, efficiency=1e-3)
    assert np.array_equal(a.times_fs, b.times_fs) and np.array_equal(a.signal_nm, b.signal_nm)
    assert not np.array_equal(a.times_fs[:10], c.times_fs[:10])


def test_pair_events_iterable():
    pairs = generate_pairs(SPEC, 0.1, 0.001, seed=4, efficiency=1e-3)
    ev = list(pairs)
    assert len(ev) == len(pairs) and ev[0].pair_id == pairs.pair_id[0]
    assert ev[0].idler_wavelength_nm == pytest.approx(float(idler_wavelength(ev[0].signal_wavelength_nm,
                                                                              pairs.pump_nm)))


def test_emitted_rate_matches_detected_slope_at_36uw():
    chain = DetectionChain()
    rate = emitted_rate_hz(SPEC, 0.036)
    detected = rate * chain.pair_efficiency(HistogramConfig().coincidence_window_fs)
    assert detected == pytest.approx(0.58e3 * 0.036, rel=1e-12)
    assert detected == pytest.approx(21.0, abs=0.2)


def test_internal_brightness():
    assert internal_brightness(1.0, 1.0, 1.0, 0.0) == pytest.approx(1.0)
    bw = bandwidth_nm_to_mhz(30.0, 1560.0)
    assert bw == pytest.approx(3.7e6, rel=0.01)
    # power back-solved for 5e-3 pairs/s/mW/MHz from 400 Hz at 14 dB
    power = 400 * 10 ** 1.4 / (5e-3 * bw)
    assert internal_brightness(400.0, power, bw, 14.0) == pytest.approx(5e-3, rel=1e-12)
    assert 0.1 < power < 2.0
    b1 = internal_brightness(10.0, 1.0, 1.0, 3.0)
    b2 = internal_brightness(10.0, 1.0, 1.0, 6.0)
    assert b2 / b1 == pytest.approx(10 ** 0.3, rel=1e-12)
    with pytest.raises(ValueError):
        internal_brightness(1.0, 0.0, 1.0, 0.0)
    with pytest.raises(ValueError):
        internal_brightness(1.0, 1.0, 0.0, 0.0)
