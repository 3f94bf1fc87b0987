"""Quick analytic-vs-simulation consistency checks run by ``spdcsim selftest``."""

from __future__ import annotations

import math

import numpy as np

from . import _core
from ._core import _fallback
from .coincidence import Correlator, HistogramConfig, correlate
from .detection import DetectionChain, simulate_tag_stream
from .dispersion import (REFERENCE_AREAS, REFERENCE_GRATING, GratingParams, conversion_efficiency,
                         default_dispersion, delta_k, qpm_period_for)
from .fitting import fit_ce_spectrum
from .franson import FransonConfig, outcome_probabilities
from .scenario import ScenarioError, scenario_from_dict
from .source import SourceSpec
from .tags import TimeTagStream


def brute_force_histogram(t1, t2, span, bin_width):
    """O(n1 n2) reference for the correlator."""
    hist = np.zeros(2 * span // bin_width, dtype=np.int64)
    for a in t1:
        for b in t2:
            d = int(b) - int(a)
            if -span <= d < span:
                hist[(d + span) // bin_width] += 1
    return hist


def _check_qpm():
    disp = default_dispersion()
    worst = 0.0
    for lam in np.linspace(1500.0, 1650.0, 7):
        worst = max(worst, abs(float(delta_k(disp, lam, qpm_period_for(disp, lam)))))
    return worst < 1e-9, f"max |dk| = {worst:.2e} rad/m"


def _check_ce_fit():
    disp = default_dispersion()
    grid = np.linspace(1560.7, 1561.3, 81)
    from .dispersion import ce_spectrum
    spec = ce_spectrum(disp, REFERENCE_GRATING, REFERENCE_AREAS, grid)
    init = GratingParams(REFERENCE_GRATING.length_m * 1.2, REFERENCE_GRATING.period_m,
                         REFERENCE_GRATING.chi2_eff_m_per_v * 0.8)
    res = fit_ce_spectrum(spec, disp, REFERENCE_AREAS, init)
    err = abs(res["L_g_mm"] / 69.0 - 1)
    return res.converged and err < 1e-6, f"L_g rel. error {err:.1e}, converged={res.converged}"


def _check_correlator(seed):
    rng = np.random.default_rng(seed)
    cfg = HistogramConfig(bin_width_fs=1000, span_fs=20_000, coincidence_window_fs=2000,
                          accidental_window_total_fs=4000, accidental_offset_windows=2.0)
    bad = 0
    for _ in range(20):
        n = int(rng.integers(0, 300))
        t = np.sort(rng.integers(0, 200_000, n))
        ch = rng.integers(1, 3, n).astype(np.uint8)
        tags = TimeTagStream(t, ch, 1e-10)
        ref = brute_force_histogram(t[ch == 1], t[ch == 2], cfg.span_fs, cfg.bin_width_fs)
        got = correlate(tags, cfg).counts
        corr = Correlator(cfg)
        for part in np.array_split(np.arange(n), 5):
            corr.feed(TimeTagStream(t[part], ch[part], 0.0))
        bad += (not np.array_equal(ref, got)) + (not np.array_equal(ref, corr.result(1e-10).counts))
    return bad == 0, f"{bad} mismatching histograms (backend {_core.BACKEND})"


def _check_backends(seed):
    rng = np.random.default_rng(seed + 1)
    t1 = np.sort(rng.integers(0, 10 ** 9, 5000))
    t2 = np.sort(rng.integers(0, 10 ** 9, 5000))
    a = np.zeros(1000, np.int64)
    b = np.zeros(1000, np.int64)
    _core.correlate_into(t1, t2, 500_000, 1000, a)
    _fallback.correlate_into(t1, t2, 500_000, 1000, b)
    return np.array_equal(a, b), f"{_core.BACKEND} vs python, {int(a.sum())} delays"


def _check_franson():
    cfg = FransonConfig()
    c = outcome_probabilities(cfg.at_offset(7.35))
    d = outcome_probabilities(cfg.at_offset(7.35 + cfg.fringe_period_pm / 2))
    ok = math.isclose(c.central / c.early, 4.0, rel_tol=1e-12) and d.central < 1e-15
    return ok, f"constructive ratio {c.central / c.early:.12f}, destructive {d.central:.1e}"


def _check_singles(seed):
    spec, chain = SourceSpec(), DetectionChain()
    tags = simulate_tag_stream(spec, chain, 0.08, 1.0, seed)
    from .source import emitted_rate_hz
    r1, r2 = chain.singles_rate(emitted_rate_hz(spec, 0.08))
    n1, n2 = tags.counts()
    z = max(abs(n1 - r1) / math.sqrt(r1), abs(n2 - r2) / math.sqrt(r2))
    return z < 5, f"singles {n1}, {n2} vs {r1:.0f}, {r2:.0f} expected (max |z| {z:.2f})"


def _check_determinism(seed):
    spec, chain = SourceSpec(), DetectionChain()
    a = simulate_tag_stream(spec, chain, 0.08, 0.5, seed, slab_s=0.5)
    b = simulate_tag_stream(spec, chain, 0.08, 0.5, seed, slab_s=0.07, workers=3)
    return a.same_tags(b), f"{len(a)} tags, slab 0.5 s vs 0.07 s x 3 threads"


def _check_schema():
    try:
        scenario_from_dict({"schema_version": 1, "detection": {"loss_dB": 7}})
    except ScenarioError as exc:
        return True, f"rejected: {exc}"
    return False, "unknown key accepted"


def run_selftest(seed: int = 0):
    checks = [
        ("qpm_round_trip", _check_qpm),
        ("ce_fit_noiseless", _check_ce_fit),
        ("correlator_vs_brute_force", lambda: _check_correlator(seed)),
        ("cython_vs_python_backend", lambda: _check_backends(seed)),
        ("franson_outcomes", _check_franson),
        ("singles_vs_closed_form", lambda: _check_singles(seed)),
        ("slab_determinism", lambda: _check_determinism(seed)),
        ("corrupted_scenario_rejected", _check_schema),
    ]
    out = []
    for name, fn in checks:
        try:
            ok, detail = fn()
        except Exception as exc:  # a crashing check is a failed check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        out.append((name, bool(ok), detail))
    return out
