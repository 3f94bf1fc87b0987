"""Quasi-phase-matching physics for type-0 SHG / SPDC in a poled waveguide.

Wavelengths cross the public interface as vacuum wavelengths in nm; all
internal arithmetic is SI. A :class:`DispersionModel` maps an FH wavelength to
the effective indices ``n_P(lambda)`` and ``n_SH(lambda / 2)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.constants import c as C_LIGHT
from scipy.constants import epsilon_0 as EPS0
from scipy.interpolate import CubicSpline

NM = 1e-9

# Reference point of the default model: poling wavelength and grating period.
POLING_WAVELENGTH_NM = 1561.0
DEFAULT_PERIOD_M = 3.14e-6


class BandError(ValueError):
    """Wavelength outside the declared validity band of a dispersion model."""


class NoPhaseMatchError(ValueError):
    """k_SH - 2 k_P is not positive, so no finite grating period exists."""


@dataclass(frozen=True)
class GratingParams:
    length_m: float
    period_m: float
    chi2_eff_m_per_v: float
    waveguide_length_m: float | None = None

    def __post_init__(self):
        for name in ("length_m", "period_m", "chi2_eff_m_per_v"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be finite and > 0, got {v}")
        if self.waveguide_length_m is not None and self.length_m > self.waveguide_length_m:
            raise ValueError(
                f"grating length {self.length_m} m exceeds waveguide length {self.waveguide_length_m} m"
            )


@dataclass(frozen=True)
class ModeAreas:
    s_p_m2: float = 0.74e-12
    s_sh_m2: float = 0.32e-12

    def __post_init__(self):
        if not (self.s_p_m2 > 0 and self.s_sh_m2 > 0):
            raise ValueError("mode areas must be > 0")


# Values extracted from the measured SHG spectrum of the poled Si3N4 waveguide.
REFERENCE_GRATING = GratingParams(length_m=69e-3, period_m=3.14e-6, chi2_eff_m_per_v=0.05e-12,
                                  waveguide_length_m=81e-3)
REFERENCE_AREAS = ModeAreas()


class DispersionModel:
    """Effective-index curves for the FH band and the SH (half-wavelength) band.

    ``fh`` and ``sh`` are callables taking vacuum wavelength in nm. Evaluation
    outside ``fh_band`` / ``sh_band`` raises :class:`BandError`.
    """

    def __init__(self, fh: Callable, sh: Callable,
                 fh_band: tuple[float, float], sh_band: tuple[float, float],
                 description: str = ""):
        if not (fh_band[0] < fh_band[1] and sh_band[0] < sh_band[1]):
            raise ValueError("bands must be (min, max) with min < max")
        self._fh = fh
        self._sh = sh
        self.fh_band = (float(fh_band[0]), float(fh_band[1]))
        self.sh_band = (float(sh_band[0]), float(sh_band[1]))
        self.description = description

    @staticmethod
    def _check(lam, band, label):
        lam = np.asarray(lam, dtype=float)
        if np.any(~np.isfinite(lam)) or np.any(lam < band[0]) or np.any(lam > band[1]):
            raise BandError(f"{label} wavelength outside [{band[0]}, {band[1]}] nm: {lam}")
        return lam

    def _checked_index(self, fn, lam, band, label):
        n = np.asarray(fn(self._check(lam, band, label)), dtype=float)
        if np.any(~np.isfinite(n)) or np.any(n <= 1.0):
            raise ValueError(f"{label} effective index must be finite and > 1, got {n}")
        return n

    def n_fh(self, lam_nm):
        """n_P at FH wavelength ``lam_nm``."""
        return self._checked_index(self._fh, lam_nm, self.fh_band, "FH")

    def n_sh(self, lam_sh_nm):
        """n_SH at SH wavelength ``lam_sh_nm`` (half the FH wavelength)."""
        return self._checked_index(self._sh, lam_sh_nm, self.sh_band, "SH")

    def indices(self, lam_fh_nm):
        """(n_P(lambda), n_SH(lambda/2)) for an FH wavelength."""
        lam = np.asarray(lam_fh_nm, dtype=float)
        return self.n_fh(lam), self.n_sh(lam / 2.0)

    @classmethod
    def polynomial(cls, fh_coeffs: Sequence[float], sh_coeffs: Sequence[float],
                   fh_center_nm: float, sh_center_nm: float,
                   fh_band, sh_band, description: str = "") -> "DispersionModel":
        """Index as a polynomial in (lambda - center) [nm]; coefficients low order first."""
        fh_p = np.polynomial.Polynomial(fh_coeffs)
        sh_p = np.polynomial.Polynomial(sh_coeffs)
        return cls(lambda lam: fh_p(lam - fh_center_nm), lambda lam: sh_p(lam - sh_center_nm),
                   fh_band, sh_band, description)

    @classmethod
    def tabulated(cls, lam_fh_nm, n_fh, n_sh, description: str = "") -> "DispersionModel":
        """Cubic-spline table. ``n_sh[i]`` is the SH-mode index at ``lam_fh_nm[i] / 2``."""
        lam = np.asarray(lam_fh_nm, dtype=float)
        if lam.ndim != 1 or lam.size < 4:
            raise ValueError("dispersion table needs at least 4 rows")
        if np.any(np.diff(lam) <= 0):
            raise ValueError("dispersion table wavelengths must be strictly increasing")
        fh_spline = CubicSpline(lam, np.asarray(n_fh, dtype=float), extrapolate=False)
        sh_spline = CubicSpline(lam / 2.0, np.asarray(n_sh, dtype=float), extrapolate=False)
        return cls(fh_spline, sh_spline, (lam[0], lam[-1]), (lam[0] / 2.0, lam[-1] / 2.0),
                   description)

    @classmethod
    def from_csv(cls, path) -> "DispersionModel":
        """Read a ``lambda_nm,n_fh,n_sh`` table."""
        rows = _read_csv(path, ("lambda_nm", "n_fh", "n_sh"))
        return cls.tabulated(rows["lambda_nm"], rows["n_fh"], rows["n_sh"],
                             description=f"table {Path(path).name}")

    def to_csv(self, path, grid_nm) -> None:
        grid = np.asarray(grid_nm, dtype=float)
        n_p, n_sh = self.indices(grid)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["lambda_nm", "n_fh", "n_sh"])
            for row in zip(grid, n_p, n_sh):
                w.writerow([repr(float(v)) for v in row])


def default_dispersion() -> DispersionModel:
    """Synthetic TE00 effective indices for the poled Si3N4 guide.

    No tabulated indices are available, so this quadratic model is built to
    satisfy the type-0 QPM condition n_SH - n_P = lambda / (2 Lambda) exactly at
    1561 nm with Lambda = 3.14 um. Group indices 2.05 (FH) and 2.15 (SH) set the
    slopes. The absolute CE prefactor depends on this choice.
    """
    n_p0 = 1.80
    n_sh0 = n_p0 + POLING_WAVELENGTH_NM * NM / (2.0 * DEFAULT_PERIOD_M)
    sh_center = POLING_WAVELENGTH_NM / 2.0
    # dn/dlambda = (n - n_g) / lambda
    fh_slope = (n_p0 - 2.05) / POLING_WAVELENGTH_NM
    sh_slope = (n_sh0 - 2.15) / sh_center
    return DispersionModel.polynomial(
        [n_p0, fh_slope, -2.0e-8], [n_sh0, sh_slope, -5.0e-8],
        POLING_WAVELENGTH_NM, sh_center,
        fh_band=(1450.0, 1700.0), sh_band=(725.0, 850.0),
        description="synthetic quadratic model matched to the reference device",
    )


def _mismatch_no_grating(disp: DispersionModel, lam_nm):
    # k_SH - 2 k_P = (4 pi / lambda) (n_SH - n_P)
    n_p, n_sh = disp.indices(lam_nm)
    lam_m = np.asarray(lam_nm, dtype=float) * NM
    return 4.0 * np.pi * (n_sh - n_p) / lam_m


def delta_k(disp: DispersionModel, lambda_fh_nm, period_m: float):
    """Net wavevector mismatch k_SH - 2 k_P - 2 pi / period [rad/m]."""
    if not period_m > 0:
        raise ValueError("period must be > 0")
    dk = _mismatch_no_grating(disp, lambda_fh_nm)
    if math.isinf(period_m):
        return dk
    return dk - 2.0 * np.pi / period_m


def qpm_period_for(disp: DispersionModel, lambda_fh_nm: float) -> float:
    """Grating period [m] that phase-matches SHG of ``lambda_fh_nm``."""
    dk = float(_mismatch_no_grating(disp, lambda_fh_nm))
    if not dk > 0:
        raise NoPhaseMatchError(f"k_SH - 2k_P = {dk} rad/m at {lambda_fh_nm} nm")
    return 2.0 * np.pi / dk


def sinc(x):
    """sin(x)/x with the removable singularity handled by a Taylor series."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-6
    safe = np.where(small, 1.0, x)
    return np.where(small, 1.0 - x * x / 6.0, np.sin(safe) / safe)


def ce_prefactor(disp: DispersionModel, g: GratingParams, areas: ModeAreas, lambda_fh_nm):
    """Peak (phase-matched) conversion efficiency [1/W]."""
    n_p, n_sh = disp.indices(lambda_fh_nm)
    lam_m = np.asarray(lambda_fh_nm, dtype=float) * NM
    omega = 2.0 * np.pi * C_LIGHT / lam_m
    num = (omega * g.length_m * g.chi2_eff_m_per_v) ** 2
    den = 2.0 * EPS0 * C_LIGHT ** 3 * n_p ** 2 * n_sh
    return num / den * (areas.s_sh_m2 / areas.s_p_m2 ** 2)


def conversion_efficiency(disp: DispersionModel, g: GratingParams, areas: ModeAreas, lambda_fh_nm):
    """SHG conversion efficiency P_SH / P_P^2 [1/W] at FH wavelength(s) in nm."""
    x = delta_k(disp, lambda_fh_nm, g.period_m) * g.length_m / 2.0
    return ce_prefactor(disp, g, areas, lambda_fh_nm) * sinc(x) ** 2


def sh_power(disp, g, areas, lambda_fh_nm, pump_power_w):
    """On-chip SH power for a given on-chip pump power (CE * P_P^2)."""
    return conversion_efficiency(disp, g, areas, lambda_fh_nm) * np.asarray(pump_power_w) ** 2


@dataclass
class CESpectrum:
    wavelength_nm: np.ndarray
    ce_per_w: np.ndarray
    sigma_per_w: np.ndarray | None = None

    def __post_init__(self):
        self.wavelength_nm = np.asarray(self.wavelength_nm, dtype=float)
        self.ce_per_w = np.asarray(self.ce_per_w, dtype=float)
        if self.wavelength_nm.shape != self.ce_per_w.shape or self.wavelength_nm.ndim != 1:
            raise ValueError("wavelength and CE arrays must be 1-D and equal length")
        if np.any(np.diff(self.wavelength_nm) <= 0):
            raise ValueError("CE spectrum wavelengths must be strictly increasing")
        if np.any(~np.isfinite(self.ce_per_w)) or np.any(self.ce_per_w < 0):
            raise ValueError("CE values must be finite and >= 0")
        if self.sigma_per_w is not None:
            self.sigma_per_w = np.asarray(self.sigma_per_w, dtype=float)
            if self.sigma_per_w.shape != self.ce_per_w.shape:
                raise ValueError("sigma array length mismatch")

    def __len__(self):
        return self.wavelength_nm.size

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            header = ["lambda_nm", "ce_per_w"] + (["sigma"] if self.sigma_per_w is not None else [])
            w.writerow(header)
            for i in range(len(self)):
                row = [self.wavelength_nm[i], self.ce_per_w[i]]
                if self.sigma_per_w is not None:
                    row.append(self.sigma_per_w[i])
                w.writerow([repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path) -> "CESpectrum":
        rows = _read_csv(path, ("lambda_nm", "ce_per_w"), optional=("sigma",))
        return cls(rows["lambda_nm"], rows["ce_per_w"], rows.get("sigma"))


def ce_spectrum(disp, g, areas, grid_nm, noise_sigma_per_w: float = 0.0,
                seed: int = 0) -> CESpectrum:
    """Evaluate CE on a wavelength grid, optionally with seeded additive Gaussian noise.

    Noisy samples are clamped at zero since a measured efficiency cannot be negative.
    """
    grid = np.asarray(grid_nm, dtype=float)
    if grid.ndim != 1 or grid.size == 0 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be a non-empty strictly increasing 1-D sequence")
    ce = conversion_efficiency(disp, g, areas, grid)
    sigma = None
    if noise_sigma_per_w > 0:
        from .rng import CounterRNG
        ce = ce + noise_sigma_per_w * CounterRNG(seed, "ce_noise").generator().standard_normal(grid.size)
        ce = np.maximum(ce, 0.0)
        sigma = np.full(grid.size, float(noise_sigma_per_w))
    return CESpectrum(grid, ce, sigma)


def _read_csv(path, required, optional=()):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        fields = reader.fieldnames or []
        missing = [k for k in required if k not in fields]
        if missing:
            raise ValueError(f"{path}: missing columns {missing}, have {fields}")
        unknown = [k for k in fields if k not in required and k not in optional]
        if unknown:
            raise ValueError(f"{path}: unexpected columns {unknown}")
        cols = {k: [] for k in fields}
        for row in reader:
            for k in fields:
                cols[k].append(float(row[k]))
    return {k: np.asarray(v) for k, v in cols.items()}
