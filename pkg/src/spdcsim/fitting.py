"""Bounded Levenberg-Marquardt least squares and the three model adapters.

The engine minimises ``0.5 * sum((w_i * r_i(p))**2)`` subject to box bounds,
using Marquardt's diagonal scaling and Nielsen's damping update. Parameter
standard errors are ``sqrt(diag((J^T W J)^-1)) * sqrt(chi2_reduced)`` evaluated
at the optimum, so a reported ``V = 0.9936 +- 0.0194`` means one fit standard
error, without systematics.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .dispersion import (
    CESpectrum, DispersionModel, GratingParams, ModeAreas, NoPhaseMatchError,
    ce_prefactor, conversion_efficiency, delta_k, qpm_period_for, sinc,
)


class FitError(ValueError):
    pass


class NumericError(FitError):
    """Residual or Jacobian became non-finite."""

    def __init__(self, message, params):
        super().__init__(f"{message} at params={list(params)}")
        self.params = np.array(params, dtype=float)


class IllPosedError(FitError):
    pass


class DegenerateError(FitError):
    pass


class DomainError(FitError):
    pass


@dataclass
class FitProblem:
    residual: Callable[[np.ndarray], np.ndarray]
    x0: Sequence[float]
    lower: Sequence[float] | None = None
    upper: Sequence[float] | None = None
    weights: Sequence[float] | None = None
    jacobian: Callable[[np.ndarray], np.ndarray] | None = None
    names: Sequence[str] | None = None

    def __post_init__(self):
        self.x0 = np.array(self.x0, dtype=float)
        n = self.x0.size
        self.lower = np.full(n, -np.inf) if self.lower is None else np.array(self.lower, dtype=float)
        self.upper = np.full(n, np.inf) if self.upper is None else np.array(self.upper, dtype=float)
        if self.lower.shape != (n,) or self.upper.shape != (n,):
            raise ValueError("bounds must match the parameter vector")
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound above upper bound")
        if np.any(self.x0 < self.lower) or np.any(self.x0 > self.upper):
            raise ValueError("initial parameters outside bounds")
        if self.weights is not None:
            self.weights = np.array(self.weights, dtype=float)
        if self.names is None:
            self.names = [f"p{i}" for i in range(n)]
        self.names = list(self.names)


@dataclass
class FitResult:
    names: list[str]
    params: np.ndarray
    stderr: np.ndarray
    chi2_reduced: float
    cost: float
    converged: bool
    iterations: int
    bound_active: list[str] = field(default_factory=list)
    model: str = "generic"
    covariance: np.ndarray | None = None
    message: str = ""
    cost_history: list[float] = field(default_factory=list)  # initial cost, then each accepted step

    def __getitem__(self, name):
        return float(self.params[self.names.index(name)])

    def error(self, name):
        return float(self.stderr[self.names.index(name)])

    @property
    def status(self):
        return "bound-active" if self.bound_active else ("converged" if self.converged else "max-iter")

    def to_dict(self):
        return {
            "model": self.model,
            "params": {n: {"value": float(v), "stderr": float(e)}
                       for n, v, e in zip(self.names, self.params, self.stderr)},
            "chi2_reduced": float(self.chi2_reduced),
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
        }

    def to_json(self, **extra) -> str:
        d = self.to_dict()
        d.update(extra)
        return json.dumps(d, indent=2, sort_keys=True)


def numeric_jacobian(fun, x, lower=None, upper=None, f0=None):
    """Forward differences with step max(1e-8, 1e-8*|x_j|), flipped at an upper bound."""
    x = np.asarray(x, dtype=float)
    f0 = fun(x) if f0 is None else f0
    jac = np.empty((f0.size, x.size))
    for j in range(x.size):
        h = max(1e-8, 1e-8 * abs(x[j]))
        if upper is not None and x[j] + h > upper[j]:
            h = -h
        xp = x.copy()
        xp[j] += h
        jac[:, j] = (fun(xp) - f0) / h
    return jac


def least_squares(p: FitProblem, tol: float = 1e-10, max_iter: int = 200) -> FitResult:
    """Minimise the weighted sum of squares of ``p.residual`` within bounds."""
    w = p.weights
    lo, hi = p.lower, p.upper

    def wres(x):
        r = np.asarray(p.residual(x), dtype=float).ravel()
        if w is not None:
            r = r * w
        if not np.all(np.isfinite(r)):
            raise NumericError("non-finite residual", x)
        return r

    def wjac(x, r):
        if p.jacobian is not None:
            jac = np.asarray(p.jacobian(x), dtype=float)
            if w is not None:
                jac = jac * w[:, None]
        else:
            jac = numeric_jacobian(wres, x, lo, hi, r)
        if not np.all(np.isfinite(jac)):
            raise NumericError("non-finite Jacobian", x)
        return jac

    x = p.x0.copy()
    r = wres(x)
    m, n = r.size, x.size
    if m < n:
        raise FitError(f"{m} residuals cannot determine {n} parameters")
    cost = 0.5 * float(r @ r)
    history = [cost]
    jac = wjac(x, r)
    scale = np.maximum(np.sum(jac * jac, axis=0), 1e-300)
    mu, nu = 1e-3, 2.0
    converged = False
    it = 0

    def gradient_small(jac, r, x, tol):
        # column-normalised gradient, zeroed where a bound blocks descent
        g = jac.T @ r
        g[(x <= lo) & (g > 0)] = 0.0
        g[(x >= hi) & (g < 0)] = 0.0
        norms = np.sqrt(np.sum(jac * jac, axis=0))
        scaled = np.abs(g) / np.where(norms > 0, norms, 1.0)
        return np.max(scaled) <= tol * (1.0 + math.sqrt(2.0 * cost))

    while it < max_iter:
        g = jac.T @ r
        if gradient_small(jac, r, x, tol):
            converged = True
            break
        it += 1
        a = jac.T @ jac
        scale = np.maximum(scale, np.diag(a))
        accepted = False
        while not accepted:
            # variables pinned at a bound that blocks descent are held fixed for this step
            free = ~(((x <= lo) & (g > 0)) | ((x >= hi) & (g < 0)))
            step = np.zeros(n)
            try:
                step[free] = np.linalg.solve((a + mu * np.diag(scale))[np.ix_(free, free)], -g[free])
            except np.linalg.LinAlgError:
                mu *= nu
                nu *= 2.0
                continue
            x_new = np.clip(x + step, lo, hi)
            step = x_new - x
            if np.all(np.abs(step) <= 1e-15 * (np.abs(x) + 1e-300)):
                # no representable progress left
                converged = gradient_small(jac, r, x, math.sqrt(tol))
                break
            r_new = wres(x_new)
            cost_new = 0.5 * float(r_new @ r_new)
            predicted = -(g @ step) - 0.5 * step @ a @ step
            if cost_new < cost:
                rho = (cost - cost_new) / predicted if predicted > 0 else 1.0
                small_change = (cost - cost_new) <= 1e-15 * cost
                x, r, cost = x_new, r_new, cost_new
                history.append(cost)
                jac = wjac(x, r)
                mu *= max(1.0 / 3.0, 1.0 - (2.0 * rho - 1.0) ** 3)
                nu = 2.0
                accepted = True
                if small_change and gradient_small(jac, r, x, math.sqrt(tol)):
                    converged = True
            else:
                mu *= nu
                nu *= 2.0
                if mu > 1e30:
                    break
        if not accepted or converged:
            if not accepted and not converged:
                converged = gradient_small(jac, r, x, math.sqrt(tol))
            break

    dof = m - n
    chi2_red = 2.0 * cost / dof if dof > 0 else float("nan")
    a = jac.T @ jac
    cov = np.linalg.pinv(a)
    factor = chi2_red if dof > 0 else 1.0
    stderr = np.sqrt(np.clip(np.diag(cov) * factor, 0.0, None))
    active = [nm for nm, xi, l, u in zip(p.names, x, lo, hi) if xi <= l or xi >= u]
    return FitResult(names=p.names, params=x, stderr=stderr, chi2_reduced=chi2_red,
                     cost=cost, converged=bool(converged), iterations=it,
                     bound_active=active, covariance=cov * factor, cost_history=history)


# ---------------------------------------------------------------------------
# QPM sinc^2 spectrum


_CE_UNITS = np.array([1e-3, 1e-6, 1e-12])  # fitted in mm, um, pm/V


def _check_lobe(spec: CESpectrum):
    if len(spec) < 10:
        raise IllPosedError(f"need >= 10 CE points, got {len(spec)}")
    ce = spec.ce_per_w
    k = int(np.argmax(ce))
    half = 0.5 * ce[k]
    if ce[k] <= 0 or not (np.any(ce[:k] < half) and np.any(ce[k + 1:] < half)):
        raise IllPosedError("CE data do not bracket a full sinc^2 lobe (peak at edge or no half-maximum on one side)")
    return k


def fit_ce_spectrum(spec: CESpectrum, disp: DispersionModel, areas: ModeAreas,
                    init: GratingParams, tol: float = 1e-10, max_iter: int = 200) -> FitResult:
    """Fit grating length, period and chi2_eff to a measured CE spectrum.

    The first stage fits the phase-matching wavelength instead of the period,
    starting from the brightest data point: a few-percent period error moves the
    lobe by tens of nm, so ``init.period_m`` is not a usable starting value. The
    second stage polishes in (length, period, chi2) and reports those errors.
    """
    k = _check_lobe(spec)
    lam = spec.wavelength_nm
    y = spec.ce_per_w
    if spec.sigma_per_w is not None and np.all(spec.sigma_per_w > 0):
        weights = 1.0 / spec.sigma_per_w
    else:
        weights = None
    wl_lo, wl_hi = float(lam[0]), float(lam[-1])

    def model_lam0(q):
        lam0 = q[1]
        try:
            period = qpm_period_for(disp, lam0)
        except NoPhaseMatchError:
            return np.full_like(y, np.nan)
        g = GratingParams(q[0] * 1e-3, period, q[2] * 1e-12)
        return conversion_efficiency(disp, g, areas, lam)

    x0 = [init.length_m * 1e3, float(lam[k]), init.chi2_eff_m_per_v * 1e12]
    stage1 = FitProblem(lambda q: model_lam0(q) - y, x0,
                        lower=[1e-3, wl_lo, 1e-9], upper=[1e4, wl_hi, 1e6],
                        weights=weights, names=["L_g_mm", "lambda_qpm_nm", "chi2_pm_per_v"])
    r1 = least_squares(stage1, tol=tol, max_iter=max_iter)
    period0 = qpm_period_for(disp, r1.params[1]) * 1e6

    def model(q):
        g = GratingParams(q[0] * 1e-3, q[1] * 1e-6, q[2] * 1e-12)
        return conversion_efficiency(disp, g, areas, lam)

    # a forward difference in the period is too coarse: d(dk)/dPeriod is ~1e5 lobe widths per um
    stage2 = FitProblem(lambda q: model(q) - y, [r1.params[0], period0, r1.params[2]],
                        lower=[1e-3, 1e-3, 1e-9], upper=[1e4, 1e4, 1e6], weights=weights,
                        jacobian=lambda q: ce_jacobian(disp, areas, lam, q),
                        names=["L_g_mm", "period_um", "chi2_pm_per_v"])
    res = least_squares(stage2, tol=tol, max_iter=max_iter)
    res.model = "qpm_sinc2"
    res.iterations += r1.iterations
    res.converged = res.converged and r1.converged
    return res


def _dsinc(x):
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-4
    safe = np.where(small, 1.0, x)
    return np.where(small, -x / 3.0 + x ** 3 / 30.0, (np.cos(safe) - np.sin(safe) / safe) / safe)


def ce_jacobian(disp, areas, lam_nm, q):
    """d CE / d (L_g [mm], period [um], chi2 [pm/V]) for the sinc^2 model."""
    length, period, chi = q[0] * 1e-3, q[1] * 1e-6, q[2] * 1e-12
    g = GratingParams(length, period, chi)
    pref = ce_prefactor(disp, g, areas, lam_nm)
    dk = delta_k(disp, lam_nm, period)
    x = dk * length / 2.0
    s, ds = sinc(x), _dsinc(x)
    ce = pref * s * s
    d_len = 2.0 * ce / length + pref * 2.0 * s * ds * dk / 2.0
    d_per = pref * 2.0 * s * ds * (length / 2.0) * (2.0 * np.pi / period ** 2)
    d_chi = 2.0 * ce / chi
    return np.column_stack([d_len * 1e-3, d_per * 1e-6, d_chi * 1e-12])


def grating_from_fit(res: FitResult, waveguide_length_m=None) -> GratingParams:
    return GratingParams(res["L_g_mm"] * 1e-3, res["period_um"] * 1e-6,
                         res["chi2_pm_per_v"] * 1e-12, waveguide_length_m)


# ---------------------------------------------------------------------------
# two-photon fringe


def fringe_model(offset_pm, amplitude, visibility, period_pm, phase):
    return amplitude * (1.0 + visibility * np.cos(2.0 * np.pi * np.asarray(offset_pm) / period_pm + phase))


def _fringe_jacobian(x, offs):
    a, v, per, ph = x
    arg = 2.0 * np.pi * offs / per + ph
    c, s = np.cos(arg), np.sin(arg)
    return np.column_stack([
        1.0 + v * c,
        a * c,
        a * v * s * 2.0 * np.pi * offs / per ** 2,
        -a * v * s,
    ])


def _linear_fringe_start(offs, counts, period, weights):
    arg = 2.0 * np.pi * offs / period
    design = np.column_stack([np.ones_like(offs), np.cos(arg), np.sin(arg)])
    wd = design * weights[:, None]
    coef, *_ = np.linalg.lstsq(wd, counts * weights, rcond=None)
    a, b, cc = coef
    amp = max(a, 1e-12)
    vis = min(math.hypot(b, cc) / amp, 1.0)
    phase = math.atan2(-cc, b)
    resid = counts - design @ coef
    return (amp, vis, phase), float(np.sum((resid * weights) ** 2))


def fit_fringe(points, init=None, tol: float = 1e-12, max_iter: int = 200) -> FitResult:
    """Fit N(d) = A (1 + V cos(2 pi d / period + phase)) with Poisson weights.

    ``points`` is a sequence of (pump_offset_pm, counts). ``init`` may be a dict
    with any of ``amplitude``, ``visibility``, ``period_pm``, ``phase``; missing
    entries are estimated by linear least squares at fixed period.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("points must be (offset_pm, counts) pairs")
    offs, counts = pts[:, 0], pts[:, 1]
    if offs.size < 8:
        raise DegenerateError(f"need >= 8 fringe points, got {offs.size}")
    if np.any(counts < 0):
        raise DomainError("counts must be >= 0")
    if np.ptp(counts) == 0:
        raise DegenerateError("all counts equal: no fringe")
    init = dict(init or {})
    period = float(init.get("period_pm", 6.6))
    if np.ptp(offs) < period * (1 - 1e-9):
        raise DegenerateError("offsets must span at least one fringe period")
    weights = 1.0 / np.sqrt(np.maximum(counts, 1.0))
    (amp, vis, phase), _ = _linear_fringe_start(offs, counts, period, weights)
    amp = float(init.get("amplitude", amp))
    vis = float(np.clip(init.get("visibility", vis), 0.0, 1.0))
    phase = float(init.get("phase", phase))

    problem = FitProblem(
        lambda x: fringe_model(offs, *x) - counts,
        [amp, vis, period, phase],
        lower=[0.0, 0.0, period / 4.0, phase - 4.0 * np.pi],
        upper=[np.inf, 1.0, period * 4.0, phase + 4.0 * np.pi],
        weights=weights,
        jacobian=lambda x: _fringe_jacobian(x, offs),
        names=["amplitude", "visibility", "period_pm", "phase"],
    )
    res = least_squares(problem, tol=tol, max_iter=max_iter)
    res.params[3] = math.remainder(res.params[3], 2.0 * np.pi)
    res.model = "fringe"
    return res


BELL_CHSH_VISIBILITY = 1.0 / math.sqrt(2.0)


def violates_bell(visibility: float, threshold: float = BELL_CHSH_VISIBILITY) -> bool:
    """True when a fringe visibility exceeds the CHSH bound (~71%)."""
    return visibility > threshold


# ---------------------------------------------------------------------------
# power law


def fit_inverse_law(points, weights=None, tol: float = 1e-12) -> FitResult:
    """Fit CAR = kappa * PCR**exponent as a straight line in log-log space."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 4:
        raise DomainError("need >= 4 (pcr, car) points")
    pcr, car = pts[:, 0], pts[:, 1]
    if np.any(~np.isfinite(pts)) or np.any(pcr <= 0) or np.any(car <= 0):
        raise DomainError("pcr and car must be finite and > 0")
    lx, ly = np.log(pcr), np.log(car)
    if np.ptp(lx) == 0:
        raise DegenerateError("all PCR values identical")
    slope0, icpt0 = np.polyfit(lx, ly, 1)
    problem = FitProblem(
        lambda q: q[0] + q[1] * lx - ly, [icpt0, slope0],
        weights=weights, jacobian=lambda q: np.column_stack([np.ones_like(lx), lx]),
        names=["log_kappa", "exponent"],
    )
    res = least_squares(problem, tol=tol)
    kappa = math.exp(res.params[0])
    res.names = ["kappa", "exponent"]
    res.stderr = np.array([kappa * res.stderr[0], res.stderr[1]])
    res.params = np.array([kappa, res.params[1]])
    res.model = "power_law"
    return res


def fit_line(x, y, sigma=None) -> FitResult:
    """Weighted straight line y = intercept + slope * x."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 3 or np.ptp(x) == 0:
        raise DegenerateError("need >= 3 distinct x values")
    slope0, icpt0 = np.polyfit(x, y, 1)
    w = None if sigma is None else 1.0 / np.asarray(sigma, dtype=float)
    problem = FitProblem(lambda q: q[0] + q[1] * x - y, [icpt0, slope0], weights=w,
                         jacobian=lambda q: np.column_stack([np.ones_like(x), x]),
                         names=["intercept", "slope"])
    res = least_squares(problem, tol=1e-12)
    res.model = "line"
    return res
