import math

import numpy as np
import pytest

from spdcsim.coincidence import HistogramConfig, correlate
from spdcsim.detection import (DetectionChain, db_to_transmission, detect, per_photon_loss_db,
                               simulate_tag_stream, singles_rates, truncated_normal)
from spdcsim.source import PairProcess, SourceSpec, generate_pairs, pair_process
from spdcsim.tags import TimeTagStream

SPEC = SourceSpec()
IDEAL = DetectionChain(loss_db=0.0, detector_efficiency=1.0, dark_count_hz=0.0, jitter_sigma_fs=0.0,
                       splitter="deterministic")


def test_ideal_chain_one_click_per_channel_at_identical_times():
    pairs = PairProcess(SPEC, 1e5, 0.01, seed=1).pairs(0, 10 ** 13)
    tags = detect(pairs, IDEAL, seed=1)
    n1, n2 = tags.counts()
    assert n1 == n2 == len(pairs)
    assert np.array_equal(tags.channel_times(1), pairs.times_fs)
    assert np.array_equal(tags.channel_times(2), pairs.times_fs)


def test_darks_only_poisson():
    chain = DetectionChain(dark_count_hz=100.0)
    tags = simulate_tag_stream(SPEC, chain, 0.0, 10.0, seed=3)
    r1, r2 = singles_rates(tags)
    for r in (r1, r2):
        assert abs(r * 10 - 1000) <= 3 * math.sqrt(1000)


def test_singles_rates_trivial_and_empty():
    tags = TimeTagStream(np.arange(100), np.ones(100, np.uint8), 10.0)
    assert singles_rates(tags) == (10.0, 0.0)
    assert singles_rates(TimeTagStream(np.empty(0), np.empty(0), 1.0)) == (0.0, 0.0)


def test_merged_rate_is_pair_clicks_plus_darks():
    chain = DetectionChain()
    from spdcsim.source import emitted_rate_hz
    tags = simulate_tag_stream(SPEC, chain, 0.05, 5.0, seed=4)
    exp1, exp2 = chain.singles_rate(emitted_rate_hz(SPEC, 0.05))
    for got, exp in zip(singles_rates(tags), (exp1, exp2)):
        assert abs(got - exp) * 5.0 <= 3 * math.sqrt(exp * 5.0)


def test_lossy_chain_coincidence_ratio():
    chain = DetectionChain(loss_db=7.0, detector_efficiency=0.85, dark_count_hz=0.0)
    proc = PairProcess(SPEC, 2e6, 1.0, seed=6)
    tags = detect(proc.pairs(0, proc.duration_fs), chain, seed=6)
    cfg = HistogramConfig(bin_width_fs=2000, span_fs=100_000, coincidence_window_fs=20_000,
                          accidental_window_total_fs=20_000, accidental_offset_windows=1.0)
    h = correlate(tags, cfg)
    coinc = h.counts_between(-100_000, 100_000)
    expected = (10 ** -0.7 * 0.85) ** 2 / 2
    assert coinc / proc.total == pytest.approx(expected, rel=0.02)
    assert chain.coincidence_probability() == pytest.approx(expected, rel=1e-12)


def test_output_sorted_under_adversarial_jitter():
    chain = DetectionChain(jitter_sigma_fs=1e6, detector_efficiency=0.5, loss_db=0.0)
    a = simulate_tag_stream(SPEC, chain, 0.001, 0.01, seed=7, slab_s=0.001)
    a.validate()
    b = simulate_tag_stream(SPEC, chain, 0.001, 0.01, seed=7, slab_s=0.0037, workers=2)
    assert len(a) > 1000 and a.same_tags(b)


def test_loss_composition_exact():
    assert DetectionChain(loss_db=3.0).add_loss(3.0).photon_survival == DetectionChain(loss_db=6.0).photon_survival
    assert db_to_transmission(3.0) ** 2 == pytest.approx(db_to_transmission(6.0), rel=1e-15)
    assert per_photon_loss_db() == pytest.approx(7.0, abs=1e-3)


def test_chain_validation():
    with pytest.raises(ValueError):
        DetectionChain(detector_efficiency=1.5)
    with pytest.raises(ValueError):
        DetectionChain(dark_count_hz=-1.0)
    with pytest.raises(ValueError):
        DetectionChain(splitter="random")


def test_truncated_jitter():
    u = np.linspace(1e-12, 1 - 1e-12, 10001)
    z = truncated_normal(u)
    assert np.all(np.abs(z) <= 6.0) and np.all(np.diff(z) > 0)


def test_outcome_matrix_sums_to_one():
    for splitter in ("5050", "deterministic"):
        m = DetectionChain(splitter=splitter).outcome_matrix()
        assert m.sum() == pytest.approx(1.0, abs=1e-15) and np.all(m >= 0)


def test_prethinning_is_statistically_equivalent():
    """Conditional sampling of clicking pairs reproduces full detection."""
    chain = DetectionChain(loss_db=3.0, detector_efficiency=0.3, dark_count_hz=0.0)
    full = pair_process(SPEC, 1.0, 0.2, seed=9, efficiency=1.0)
    thin = pair_process(SPEC, 1.0, 0.2, seed=9, efficiency=1.0, thinned_by=chain)
    t_full = detect(full.pairs(0, full.duration_fs), chain, 10)
    t_thin = detect(thin.pairs(0, thin.duration_fs), chain, 10)
    cfg = HistogramConfig()
    for a, b in zip(t_full.counts(), t_thin.counts()):
        assert abs(a - b) <= 4 * math.sqrt(a + b)
    ca = correlate(t_full, cfg).counts_between(-80_000, 80_000)
    cb = correlate(t_thin, cfg).counts_between(-80_000, 80_000)
    assert abs(ca - cb) <= 4 * math.sqrt(ca + cb)


def test_thinned_batch_for_other_chain_rejected():
    chain = DetectionChain()
    proc = pair_process(SPEC, 0.1, 0.01, seed=1, thinned_by=chain)
    with pytest.raises(ValueError):
        detect(proc.pairs(0, proc.duration_fs), chain.add_loss(1.0), 1)


def test_emission_rate_does_not_depend_on_chain_in_use():
    a = pair_process(SPEC, 0.1, 0.01, seed=1)
    b = pair_process(SPEC, 0.1, 0.01, seed=1, efficiency=None)
    assert a.rate_hz == b.rate_hz


@pytest.mark.parametrize("workers", [1, 3])
def test_seeded_runs_bit_identical(workers):
    chain = DetectionChain()
    a = simulate_tag_stream(SPEC, chain, 0.2, 0.3, seed=11, slab_s=0.3)
    b = simulate_tag_stream(SPEC, chain, 0.2, 0.3, seed=11, slab_s=0.011, workers=workers)
    assert a.same_tags(b)
    c = simulate_tag_stream(SPEC, chain, 0.2, 0.3, seed=12)
    assert not a.same_tags(c)
