"""Ensemble statistics, level-spacing references and scaling-law fits.

All fits are least squares on a linearised model unless stated otherwise.
Parameter errors are the usual standard errors ``sqrt(diag(s^2 (X^T W X)^-1))``
with ``s^2 = RSS / (n - p)``; with ``sigma`` given the weights are ``1/sigma^2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.optimize
import scipy.special
import scipy.stats

from .errors import DomainError, GroupingError, InsufficientDataError

__all__ = [
    "FitResult",
    "Histogram",
    "mean_se",
    "normalized_gaps",
    "normalized_gap_histogram",
    "gue_surmise_density",
    "gue_surmise_cdf",
    "poisson_density",
    "ks_distance_gue",
    "linear_fit",
    "fit_gap_scaling",
    "fit_entropy_scaling",
    "fit_correlation_length",
    "fit_xi_lambda",
    "fit_entropy_saturation_divergence",
]


def mean_se(values) -> tuple[float, float]:
    """Mean and ``sqrt((<A^2> - <A>^2) / n)``."""
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size < 2:
        raise InsufficientDataError("mean_se needs at least two values")
    mean = float(np.mean(v))
    var = float(np.mean((v - mean) ** 2))
    return mean, math.sqrt(var / v.size)


def gue_surmise_density(s):
    s = np.asarray(s, dtype=np.float64)
    return 32.0 / np.pi**2 * s**2 * np.exp(-4.0 * s**2 / np.pi)


def gue_surmise_cdf(s):
    s = np.clip(np.asarray(s, dtype=np.float64), 0.0, None)
    return scipy.special.erf(2.0 * s / np.sqrt(np.pi)) - 4.0 * s / np.pi * np.exp(-4.0 * s**2 / np.pi)


def poisson_density(s):
    s = np.asarray(s, dtype=np.float64)
    return np.exp(-s)


def ks_distance_gue(normalized) -> float:
    return float(scipy.stats.kstest(np.asarray(normalized, dtype=np.float64), gue_surmise_cdf).statistic)


def _group_key(r):
    if isinstance(r, dict):
        return (int(r["n"]), float(r["lambda"]))
    return (int(r.n), float(r.lam))


def _gap_of(r):
    return float(r["gap"]) if isinstance(r, dict) else float(r.gap)


def normalized_gaps(records) -> np.ndarray:
    """``g / <g>`` for records (or raw gaps) of a single (N, lambda) group."""
    records = list(records)
    if records and not isinstance(records[0], (int, float, np.floating, np.integer)):
        keys = {_group_key(r) for r in records}
        if len(keys) > 1:
            raise GroupingError(f"records mix {len(keys)} (N, lambda) groups")
        gaps = np.array([_gap_of(r) for r in records])
    else:
        gaps = np.asarray(records, dtype=np.float64)
    gaps = gaps[np.isfinite(gaps)]
    mean = gaps.mean() if gaps.size else 0.0
    if not mean > 0:
        raise DomainError("mean gap must be positive to normalise")
    return gaps / mean


@dataclass
class Histogram:
    edges: np.ndarray
    density: np.ndarray
    count: int

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    def integral(self) -> float:
        return float(np.sum(self.density * np.diff(self.edges)))

    def table(self) -> np.ndarray:
        """Columns: bin centre, empirical density, GUE surmise, Poisson."""
        c = self.centers
        return np.column_stack([c, self.density, gue_surmise_density(c), poisson_density(c)])


def normalized_gap_histogram(records, bins: int = 40, value_range=(0.0, 4.0)) -> Histogram:
    g = normalized_gaps(records)
    density, edges = np.histogram(g, bins=bins, range=value_range, density=True)
    return Histogram(edges, density, int(g.size))


@dataclass
class FitResult:
    model: str
    params: dict
    errors: dict
    fit_range: list
    residuals: np.ndarray
    convention: str = ""
    extra: dict = field(default_factory=dict)

    @property
    def rss(self) -> float:
        return float(np.sum(np.asarray(self.residuals) ** 2))

    def to_json(self) -> dict:
        return {
            "model": self.model,
            "params": {k: float(v) for k, v in self.params.items()},
            "errors": {k: float(v) for k, v in self.errors.items()},
            "fit_range": [float(x) for x in self.fit_range],
            "residuals": [float(x) for x in self.residuals],
            "rss": self.rss,
            "convention": self.convention,
            "extra": _jsonable(self.extra),
        }


def _jsonable(x):
    if isinstance(x, FitResult):
        return x.to_json()
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    return x


def linear_fit(x, y, sigma=None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Fit ``y = p0 + p1 x``; returns (params, standard errors, residuals)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.size < 2:
        raise InsufficientDataError("a line needs at least two points")
    X = np.column_stack([np.ones_like(x), x])
    w = np.ones_like(y) if sigma is None else 1.0 / np.asarray(sigma, dtype=np.float64) ** 2
    sw = np.sqrt(w)
    p, *_ = np.linalg.lstsq(X * sw[:, None], y * sw, rcond=None)
    res = y - X @ p
    dof = x.size - 2
    if dof > 0:
        s2 = float(np.sum(w * res**2)) / dof
        cov = s2 * np.linalg.inv((X * w[:, None]).T @ X)
        se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    else:
        se = np.full(2, np.nan)
    return p, se, res


def _positive(values, what):
    v = np.asarray(values, dtype=np.float64)
    if np.any(~(v > 0)):
        raise DomainError(f"{what} must be positive for a logarithmic fit")
    return v


def fit_gap_scaling(ns, means, mode: str = "power_law", sigma=None) -> FitResult:
    """``<g> ~ N^-eta`` (power_law) or ``<g> ~ exp(-xi N)`` (exponential)."""
    ns = np.asarray(ns, dtype=np.float64)
    if ns.size < 3:
        raise InsufficientDataError("gap scaling needs at least three sizes")
    g = _positive(means, "mean gaps")
    ls = None if sigma is None else np.asarray(sigma, dtype=np.float64) / g
    if mode == "power_law":
        p, se, res = linear_fit(np.log(ns), np.log(g), ls)
        return FitResult("power_law", {"eta": -p[1], "log_amplitude": p[0]},
                         {"eta": se[1], "log_amplitude": se[0]}, [ns.min(), ns.max()], res,
                         "log<g> = log_amplitude - eta log N")
    if mode == "exponential":
        p, se, res = linear_fit(ns, np.log(g), ls)
        return FitResult("exponential", {"xi": -p[1], "log_amplitude": p[0]},
                         {"xi": se[1], "log_amplitude": se[0]}, [ns.min(), ns.max()], res,
                         "log<g> = log_amplitude - xi N")
    raise ValueError(f"unknown gap scaling mode {mode!r}")


def _log_entropy_fit(ns, s, sigma):
    p, se, res = linear_fit(np.log2(ns), s, sigma)
    return FitResult("log_linear", {"c": p[1], "c_prime": p[0]}, {"c": se[1], "c_prime": se[0]},
                     [ns.min(), ns.max()], res, "S = c log2 N + c_prime")


def _plateau(ns, s, tol):
    """Longest trailing run whose successive differences stay below ``tol``."""
    start = len(s) - 1
    while start > 0 and abs(s[start] - s[start - 1]) < tol:
        start -= 1
    if start == len(s) - 1:
        return None
    return start


def fit_entropy_scaling(ns, s, mode: str = "log", sigma=None, plateau_tol: float = 0.05) -> FitResult:
    """Entropy against size.

    ``log``: ``S = c log2 N + c'`` on all sizes, with separate fits on the
    even- and odd-``N/2`` subsequences reported in ``extra``.
    ``saturation``: ``S = S_inf - a exp(-N / nu)`` plus a plateau estimate
    (mean over the trailing sizes whose steps are below ``plateau_tol``).
    """
    ns = np.asarray(ns, dtype=np.float64)
    s = np.asarray(s, dtype=np.float64)
    if ns.size < 3:
        raise InsufficientDataError("entropy scaling needs at least three sizes")
    order = np.argsort(ns)
    ns, s = ns[order], s[order]
    sig = None if sigma is None else np.asarray(sigma, dtype=np.float64)[order]
    if mode == "log":
        out = _log_entropy_fit(ns, s, sig)
        half = (ns / 2).astype(int)
        for name, mask in (("even_half", half % 2 == 0), ("odd_half", half % 2 == 1)):
            if mask.sum() >= 2:
                out.extra[name] = _log_entropy_fit(ns[mask], s[mask], None if sig is None else sig[mask])
        return out
    if mode == "saturation":
        def model(n, s_inf, a, nu):
            return s_inf - a * np.exp(-n / nu)

        guess = (s[-1], max(s[-1] - s[0], 1e-3) * np.exp(ns[0] / max(np.ptp(ns) / 2, 1.0)),
                 max(np.ptp(ns) / 2, 1.0))
        try:
            p, cov = scipy.optimize.curve_fit(model, ns, s, p0=guess, sigma=sig,
                                              absolute_sigma=sigma is not None, maxfev=20000)
            se = np.sqrt(np.clip(np.diag(cov), 0.0, None)) if np.all(np.isfinite(cov)) else np.full(3, np.nan)
        except RuntimeError as exc:
            raise DomainError(f"saturation fit did not converge: {exc}") from exc
        res = s - model(ns, *p)
        start = _plateau(ns, s, plateau_tol)
        extra = {"plateau_range": None, "plateau_value": None}
        if start is not None:
            extra = {"plateau_range": [float(ns[start]), float(ns[-1])],
                     "plateau_value": float(np.mean(s[start:]))}
        return FitResult("exponential", {"s_inf": p[0], "a": p[1], "nu": p[2]},
                         {"s_inf": se[0], "a": se[1], "nu": se[2]}, [ns.min(), ns.max()], res,
                         "S = s_inf - a exp(-N / nu)", extra)
    raise ValueError(f"unknown entropy scaling mode {mode!r}")


def fit_correlation_length(r, c, r_range: Optional[Sequence[int]] = None, sigma=None) -> FitResult:
    """``C(r) = C0 2^(-r / xi)`` by a line through ``log2 C``.

    ``xi`` is in base-2 units; ``xi_e = xi / ln 2`` is the length for
    ``exp(-r / xi_e)``.
    """
    r = np.asarray(r, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    if r_range is not None:
        lo, hi = min(r_range), max(r_range)
        if lo < r.min() or hi > r.max():
            raise DomainError(f"fit range {lo}..{hi} outside profile support {r.min()}..{r.max()}")
        mask = (r >= lo) & (r <= hi)
        r, c = r[mask], c[mask]
        sigma = None if sigma is None else np.asarray(sigma)[mask]
    c = _positive(c, "correlations in the fit range")
    ls = None if sigma is None else np.asarray(sigma, dtype=np.float64) / (c * np.log(2))
    p, se, res = linear_fit(r, np.log2(c), ls)
    if p[1] >= 0:
        raise DomainError("profile does not decay on the fit range")
    xi = -1.0 / p[1]
    xi_se = se[1] / p[1] ** 2
    return FitResult("log_linear",
                     {"xi": xi, "xi_e": xi / np.log(2), "log2_c0": p[0]},
                     {"xi": xi_se, "xi_e": xi_se / np.log(2), "log2_c0": se[0]},
                     [r.min(), r.max()], res, "base 2: C = C0 2^(-r/xi); xi_e = xi / ln 2")


def fit_xi_lambda(lams, xis, lam_max: float = 1.0, exclude=(0.1,), sigma=None) -> FitResult:
    """``xi(lambda) = -xi0 log2 lambda + const`` on ``lambda <= lam_max``."""
    lams = _positive(lams, "lambda values")
    xis = np.asarray(xis, dtype=np.float64)
    mask = lams <= lam_max
    for x in exclude:
        mask &= ~np.isclose(lams, x)
    if mask.sum() < 2:
        raise InsufficientDataError("xi(lambda) fit needs two usable lambda values")
    sig = None if sigma is None else np.asarray(sigma)[mask]
    p, se, res = linear_fit(np.log2(lams[mask]), xis[mask], sig)
    return FitResult("log_linear", {"xi0": -p[1], "const": p[0]}, {"xi0": se[1], "const": se[0]},
                     [lams[mask].min(), lams[mask].max()], res, "xi = -xi0 log2 lambda + const",
                     {"excluded": [float(x) for x in exclude]})


def fit_entropy_saturation_divergence(lams, s_inf, k: float = 4.0, lam_star: float = 4.0,
                                      lam_max: float = 1.0) -> FitResult:
    """``2^(k S_inf) = A log2(lam_star / lambda)`` on ``lambda < lam_max``.

    The returned fit keeps ``k`` and ``lam_star`` fixed and estimates ``A``
    by least squares on ``2^(k S)``. ``extra['slope']`` frees ``k`` (line of
    ``S`` against ``log2 log2(lam_star/lambda)``) and ``extra['free']`` frees
    all three parameters when at least four points are available.
    """
    lams = _positive(lams, "lambda values")
    s = np.asarray(s_inf, dtype=np.float64)
    mask = lams < lam_max
    if mask.sum() < 2:
        raise InsufficientDataError("divergence fit needs at least two lambda values below lam_max")
    lam, s = lams[mask], s[mask]
    if np.any(lam >= lam_star):
        raise DomainError("lambda must lie below lam_star")
    x = np.log2(lam_star / lam)
    y = 2.0 ** (k * s)
    amp = float(np.dot(x, y) / np.dot(x, x))
    res = y - amp * x
    dof = x.size - 1
    amp_se = math.sqrt(float(np.sum(res**2)) / dof / np.dot(x, x)) if dof > 0 else float("nan")
    out = FitResult("log_log", {"amplitude": amp, "k": k, "lam_star": lam_star},
                    {"amplitude": amp_se, "k": 0.0, "lam_star": 0.0}, [lam.min(), lam.max()], res,
                    "2^(k S_inf) = amplitude log2(lam_star / lambda)")

    p, se, r2 = linear_fit(np.log2(x), s)
    slope_k = 1.0 / p[1] if p[1] != 0 else float("inf")
    out.extra["slope"] = FitResult(
        "log_log", {"k": slope_k, "amplitude": 2.0 ** (p[0] * slope_k), "lam_star": lam_star},
        {"k": se[1] / p[1] ** 2, "amplitude": float("nan"), "lam_star": 0.0},
        [lam.min(), lam.max()], r2, "S = (1/k) log2 amplitude + (1/k) log2 log2(lam_star / lambda)")

    if lam.size >= 4:
        def model(l, kk, log2_amp, log2_star):
            return (log2_amp + np.log2(np.log2(2.0**log2_star / l))) / kk

        try:
            pf, cov = scipy.optimize.curve_fit(
                model, lam, s, p0=(k, np.log2(amp), np.log2(lam_star)),
                bounds=([1e-3, -50.0, np.log2(lam.max()) + 1e-6], [1e3, 50.0, 50.0]), maxfev=20000)
            sef = np.sqrt(np.clip(np.diag(cov), 0.0, None))
            out.extra["free"] = FitResult(
                "log_log", {"k": pf[0], "amplitude": 2.0 ** pf[1], "lam_star": 2.0 ** pf[2]},
                {"k": sef[0], "amplitude": 2.0 ** pf[1] * np.log(2) * sef[1],
                 "lam_star": 2.0 ** pf[2] * np.log(2) * sef[2]},
                [lam.min(), lam.max()], s - model(lam, *pf), "all of k, amplitude, lam_star free")
        except (RuntimeError, ValueError) as exc:
            out.extra["free"] = {"error": str(exc)}
    return out
