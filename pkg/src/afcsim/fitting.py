"""Least-squares fits for decay curves, fringes and linearity scans."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares

__all__ = [
    "FitResult",
    "fit_exponential",
    "fit_damped_beat",
    "fit_visibility",
    "fit_proportional",
]


@dataclass(frozen=True)
class FitResult:
    params: dict
    covariance: dict
    residual_norm: float
    converged: bool
    message: str = ""
    flags: tuple = ()

    def stderr(self, name: str) -> float:
        return math.sqrt(max(self.covariance.get((name, name), float("nan")), 0.0))

    def __getitem__(self, name: str) -> float:
        return self.params[name]


def _covariance(res, names, n_points: int, weighted: bool) -> dict:
    J = res.jac
    dof = max(n_points - len(names), 1)
    try:
        cov = np.linalg.pinv(J.T @ J)
    except np.linalg.LinAlgError:
        cov = np.full((len(names), len(names)), np.nan)
    if not weighted:
        cov = cov * (2 * res.cost / dof)
    return {(a, b): float(cov[i, j]) for i, a in enumerate(names) for j, b in enumerate(names)}


def fit_exponential(x, y, sigma=None) -> FitResult:
    """Fit ``y = A * exp(-x / tau)``.

    Points with ``y <= 0`` are dropped (and flagged). A decay rate that is
    indistinguishable from zero is reported as non-converged, since tau is
    then not identifiable.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    keep = y > 0
    flags = ()
    if not np.all(keep):
        flags = (f"dropped {int((~keep).sum())} non-positive points",)
    x, y = x[keep], y[keep]
    s = None if sigma is None else np.asarray(sigma, dtype=float)[keep]
    if x.size < 3:
        raise ValueError("need at least 3 positive points for an exponential fit")

    slope, intercept = np.polyfit(x, np.log(y), 1)
    x0 = x.min()
    p0 = [math.exp(intercept + slope * x0), -slope]
    scale = np.ptp(x) or 1.0

    def resid(p):
        a, k = p
        r = a * np.exp(-k * (x - x0)) - y
        return r if s is None else r / s

    res = least_squares(resid, p0, x_scale=[abs(p0[0]) or 1.0, 1.0 / scale], xtol=1e-15, ftol=1e-15, gtol=1e-15, method="lm")
    a, k = res.x
    names = ["A", "rate"]
    cov = _covariance(res, names, x.size, s is not None)
    rate_err = math.sqrt(max(cov[("rate", "rate")], 0.0))
    amp = a * math.exp(k * x0)
    converged = bool(res.success)
    message = res.message
    if abs(k) * scale < 1e-9 or (rate_err > 0 and abs(k) < 2 * rate_err):
        converged = False
        flags = flags + ("decay rate consistent with zero; tau not identifiable",)
    tau = 1.0 / k if k != 0 else math.inf
    tau_var = rate_err**2 / k**4 if k != 0 else math.inf
    amp_var = cov[("A", "A")] * math.exp(2 * k * x0)
    return FitResult(
        params={"A": amp, "tau": tau, "rate": k},
        covariance={("A", "A"): amp_var, ("tau", "tau"): tau_var, ("rate", "rate"): rate_err**2},
        residual_norm=float(np.linalg.norm(res.fun)),
        converged=converged,
        message=message,
        flags=flags,
    )


def fit_damped_beat(x, y, freq_guess=None) -> FitResult:
    """Fit ``y = A * exp(-x/tau) * (1 + B*cos(2*pi*nu*x + theta))``.

    Without ``freq_guess`` the beat frequency is seeded by scanning the
    residual of the plain exponential fit.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 6:
        raise ValueError("need at least 6 points for a beat fit")
    base = fit_exponential(x, np.clip(y, np.max(y) * 1e-12, None))
    x0 = x.min()
    envelope = base["A"] * np.exp(-x * base["rate"])
    ratio = y / envelope - 1.0

    if freq_guess is None:
        span = np.ptp(x)
        dx = np.min(np.diff(np.sort(x)))
        freqs = np.linspace(0.5 / span, 0.5 / dx, 4000)
        power = [abs(np.sum(ratio * np.exp(-2j * math.pi * f * x))) for f in freqs]
        freq_guess = float(freqs[int(np.argmax(power))])
    c = np.sum(ratio * np.exp(-2j * math.pi * freq_guess * x)) * 2 / x.size
    b0 = min(abs(c), 0.99)
    theta0 = float(np.angle(c))

    def model(p):
        a, k, b, nu, th = p
        return a * np.exp(-k * (x - x0)) * (1 + b * np.cos(2 * math.pi * nu * x + th))

    p0 = [base["A"] * math.exp(-base["rate"] * x0), base["rate"], b0, freq_guess, theta0]
    span = np.ptp(x)
    res = least_squares(
        lambda p: model(p) - y,
        p0,
        x_scale=[abs(p0[0]) or 1.0, 1.0 / span, 1.0, 1.0 / span, 1.0],
        xtol=1e-14,
        ftol=1e-14,
        gtol=1e-14,
        max_nfev=20000,
    )
    a, k, b, nu, th = res.x
    if b < 0:
        b, th = -b, th + math.pi
    if nu < 0:
        nu, th = -nu, -th
    th = (th + math.pi) % (2 * math.pi) - math.pi
    names = ["A", "rate", "B", "nu", "theta"]
    cov = _covariance(res, names, x.size, False)
    cov[("tau", "tau")] = cov[("rate", "rate")] / k**4 if k else math.inf
    return FitResult(
        params={"A": a * math.exp(k * x0), "tau": 1.0 / k if k else math.inf, "rate": k, "B": b, "nu": nu, "theta": th},
        covariance=cov,
        residual_norm=float(np.linalg.norm(res.fun)),
        converged=bool(res.success),
        message=res.message,
    )


def fit_visibility(phi, counts, sigma=None) -> FitResult:
    """Fit ``counts = C * (1 + V*cos(phi + theta))`` with ``0 <= V <= 1``.

    ``sigma`` defaults to Poisson errors ``sqrt(max(counts, 1))``.
    """
    phi = np.asarray(phi, dtype=float)
    y = np.asarray(counts, dtype=float)
    if phi.size < 4:
        raise ValueError("need at least 4 phase settings")
    if np.ptp(phi) < 1.5 * math.pi - 1e-9:
        raise ValueError("phases must span at least 3*pi/2")
    s = np.sqrt(np.maximum(y, 1.0)) if sigma is None else np.asarray(sigma, dtype=float)

    # linear seed: y = a + b cos(phi) + c sin(phi)
    A = np.column_stack([np.ones_like(phi), np.cos(phi), np.sin(phi)])
    (a, b, c), *_ = np.linalg.lstsq(A / s[:, None], y / s, rcond=None)
    C0 = max(a, 1e-12)
    V0 = float(np.clip(math.hypot(b, c) / C0, 0.0, 1.0))
    th0 = math.atan2(-c, b)

    def resid(p):
        C, V, th = p
        return (C * (1 + V * np.cos(phi + th)) - y) / s

    res = least_squares(
        resid,
        [C0, V0, th0],
        bounds=([0.0, 0.0, -2 * math.pi], [np.inf, 1.0, 2 * math.pi]),
        xtol=1e-15,
        ftol=1e-15,
        gtol=1e-15,
    )
    C, V, th = res.x
    th = (th + math.pi) % (2 * math.pi) - math.pi
    names = ["C", "V", "theta"]
    cov = _covariance(res, names, phi.size, weighted=True)
    return FitResult(
        params={"C": float(C), "V": float(V), "theta": float(th)},
        covariance=cov,
        residual_norm=float(np.linalg.norm(res.fun)),
        converged=bool(res.success),
        message=res.message,
    )


def fit_proportional(x, y, sigma=None) -> FitResult:
    """Least-squares line through the origin, ``y = slope * x``, with centred R^2."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.ones_like(x) if sigma is None else 1.0 / np.asarray(sigma, dtype=float) ** 2
    sxx = float(np.sum(w * x * x))
    if sxx == 0:
        raise ValueError("all x are zero; slope undefined")
    slope = float(np.sum(w * x * y)) / sxx
    resid = y - slope * x
    ss_res = float(np.sum(resid**2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else (1.0 if ss_res == 0 else 0.0)
    dof = max(x.size - 1, 1)
    if sigma is None:
        var = ss_res / dof / sxx
    else:
        var = 1.0 / sxx
    return FitResult(
        params={"slope": slope, "r_squared": r2},
        covariance={("slope", "slope"): var},
        residual_norm=math.sqrt(ss_res),
        converged=True,
    )
