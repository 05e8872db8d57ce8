"""Finite-time stand-ins for liminf/limsup scaling exponents.

A limit inferior or superior of ``log f(t) / log t`` cannot be read off finite
data. We fit least-squares slopes of ``log f`` against ``log t`` in sliding
windows of fixed width (in decades) and report the smallest and largest
slope. When the two differ, the decay rate depends on which stretch of
time one looks at.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .evolve import EigenSystem, SpectralMeasure, StateVector, spectral_measure
from .observables import TimeAverageSeries, moment_q, return_probability_series

WINDOW_SETTINGS = (0.5, 1.0)
_EDGE = 1e-9
# int_0^t J0(2s)^2 ds = (ln t + FREE_BAND_LOG_OFFSET) / (2 pi) + o(1)
FREE_BAND_LOG_OFFSET = float(np.log(16.0) + np.euler_gamma)


@dataclass
class ScalingEstimate:
    lower: float
    upper: float
    window_slopes: np.ndarray
    window_decades: float
    residuals: np.ndarray
    quantity: str = ""
    flags: list = field(default_factory=list)
    config_hash: str = ""

    def __post_init__(self):
        if not (np.isfinite(self.lower) and np.isfinite(self.upper)):
            raise ValidationError("estimate bounds must be finite")
        if self.lower > self.upper:
            raise ValidationError("lower exceeds upper")
        if len(self.window_slopes) == 0:
            raise ValidationError("no window slopes")

    @property
    def gap(self) -> float:
        return self.upper - self.lower

    def as_dict(self) -> dict:
        return {
            "quantity": self.quantity,
            "lower": float(self.lower),
            "upper": float(self.upper),
            "window_decades": float(self.window_decades),
            "slopes": [[float(t), float(s)] for t, s in self.window_slopes],
            "flags": list(self.flags),
            "config_hash": self.config_hash,
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True)


def window_fits(log_x: np.ndarray, log_y: np.ndarray, window_decades: float):
    """Least-squares slopes over every full window ``[x_i, x_i + w]`` (log10 units)."""
    x = np.asarray(log_x, dtype=float)
    y = np.asarray(log_y, dtype=float)
    if window_decades <= 0:
        raise ValidationError("window must be positive")
    centers, slopes, resid = [], [], []
    for i in range(x.size):
        if x[i] + window_decades > x[-1] + _EDGE:
            break
        j = int(np.searchsorted(x, x[i] + window_decades + _EDGE, side="left"))
        xs, ys = x[i:j], y[i:j]
        if xs.size < 3:
            continue
        xc = xs - xs.mean()
        slope = float(np.dot(xc, ys - ys.mean()) / np.dot(xc, xc))
        fit = ys.mean() + slope * xc
        centers.append(10 ** (0.5 * (xs[0] + xs[-1])))
        slopes.append(slope)
        resid.append(float(np.sqrt(np.mean((ys - fit) ** 2))))
    return np.array(centers), np.array(slopes), np.array(resid)


def slope_envelope(series: TimeAverageSeries, window_decades: float = 1.0) -> ScalingEstimate:
    """Min/max local log-log slope of the series over sliding windows."""
    t, v = series.times, series.values
    if np.any(v <= 0):
        raise ValidationError("slope envelope needs positive values")
    if t.size < 3 or np.log10(t[-1] / t[0]) < window_decades - _EDGE:
        raise ValidationError("series shorter than one window")
    centers, slopes, resid = window_fits(np.log10(t), np.log10(v), window_decades)
    if slopes.size == 0:
        raise ValidationError("too few points per window")
    return ScalingEstimate(
        float(slopes.min()),
        float(slopes.max()),
        np.column_stack((centers, slopes)),
        float(window_decades),
        resid,
        series.quantity,
    )


def _negated(est: ScalingEstimate, quantity: str, scale: float = 1.0) -> ScalingEstimate:
    ws = est.window_slopes.copy()
    ws[:, 1] = -ws[:, 1] / scale
    return ScalingEstimate(-est.upper / scale, -est.lower / scale, ws, est.window_decades,
                           est.residuals, quantity, list(est.flags))


def d2_from_series(series: TimeAverageSeries, window_decades: float = 1.0, log_offset: float | None = None,
                   wiener_floor: float | None = None) -> ScalingEstimate:
    """Correlation-dimension proxies ``(D2-, D2+) = (-max slope, -min slope)``.

    ``log_offset=c`` divides the series by ``ln t + c`` first (a modelled
    logarithmic prefactor). ``wiener_floor`` is subtracted before fitting.
    """
    s = series
    vals = s.values.copy()
    flags = []
    if wiener_floor is not None:
        vals = vals - wiener_floor
        if np.any(vals <= 0):
            raise ValidationError("series dips to the Wiener floor; cannot subtract it")
        flags.append("wiener_subtracted")
    if log_offset is not None:
        corr = np.log(s.times) + log_offset
        if np.any(corr <= 0):
            raise ValidationError("log correction is nonpositive on the grid")
        vals = vals / corr
        flags.append(f"log_corrected:{log_offset:.12g}")
    adj = TimeAverageSeries(s.times, vals, s.quantity, s.operator_hash, s.xi_label)
    est = _negated(slope_envelope(adj, window_decades), "d2")
    est.flags = flags
    if est.lower < -0.1 or est.upper > 1.1:
        est.flags.append("outside_physical_range")
    return est


def d2_estimate(es: EigenSystem, xi: StateVector, t_grid, window_decades: float = 1.0,
                log_offset: float | None = None, subtract_wiener: bool = False) -> ScalingEstimate:
    series = return_probability_series(es, xi, t_grid)
    floor = spectral_measure(es, xi).wiener_limit() if subtract_wiener else None
    return d2_from_series(series, window_decades, log_offset, floor)


def beta_from_series(series: TimeAverageSeries, q: float, window_decades: float = 1.0) -> ScalingEstimate:
    """Transport-exponent proxies: slopes of ``log <<|X|^q>>_t`` divided by ``q``."""
    if not q > 0:
        raise ValidationError("q must be positive")
    if np.all(series.values == 0):
        # frozen dynamics: no mass ever leaves the origin
        n = max(series.times.size, 1)
        return ScalingEstimate(0.0, 0.0, np.column_stack((series.times, np.zeros(n))),
                               float(window_decades), np.zeros(n), f"beta_{q:g}", ["zero_moment"])
    est = slope_envelope(series, window_decades)
    ws = est.window_slopes.copy()
    ws[:, 1] /= q
    return ScalingEstimate(est.lower / q, est.upper / q, ws, est.window_decades, est.residuals,
                           f"beta_{q:g}")


def beta_estimate(es: EigenSystem, xi: StateVector, q: float, t_grid, window_decades: float = 1.0) -> ScalingEstimate:
    return beta_from_series(moment_q(es, xi, t_grid, q), q, window_decades)


def correlation_integral(mu: SpectralMeasure, eps) -> np.ndarray:
    """``sum_k w_k mu([lam_k - eps, lam_k + eps])`` for each eps."""
    keep = mu.weights > 0
    if not np.any(keep):
        raise ValidationError("empty measure")
    order = np.argsort(mu.locations[keep], kind="stable")
    x = mu.locations[keep][order]
    w = mu.weights[keep][order]
    cum = np.concatenate(([0.0], np.cumsum(w)))
    out = []
    for e in np.atleast_1d(eps):
        hi = np.searchsorted(x, x + e, side="right")
        lo = np.searchsorted(x, x - e, side="left")
        out.append(float(np.dot(w, cum[hi] - cum[lo])))
    return np.array(out)


def correlation_dimension_direct(mu: SpectralMeasure, eps_grid, window_decades: float = 0.5) -> ScalingEstimate:
    """Slopes of ``log I(eps)`` against ``log eps`` over the eps window."""
    eps = np.asarray(eps_grid, dtype=float)
    vals = correlation_integral(mu, eps)
    series = TimeAverageSeries(eps, vals, "correlation_integral")
    span = np.log10(eps[-1] / eps[0])
    est = slope_envelope(series, min(window_decades, span))
    est.quantity = "d2_direct"
    return est


# ---------------------------------------------------------------- alpha scans


@dataclass(frozen=True)
class AlphaFunction:
    """Built-in growth functions: ``power`` t^p, ``log_power`` log(1+t)^p,
    ``iterated_log`` log(1+log(1+t)), ``user_table`` log-interpolated samples."""

    kind: str
    p: float = 1.0
    table: tuple = ()

    def __post_init__(self):
        if self.kind not in ("power", "log_power", "iterated_log", "user_table"):
            raise ValidationError(f"unknown alpha kind {self.kind!r}")
        if self.kind == "user_table":
            t = np.asarray([r[0] for r in self.table], dtype=float)
            if t.size < 2 or np.any(np.diff(t) <= 0) or t[0] <= 0:
                raise ValidationError("alpha table needs >= 2 increasing positive times")

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.kind == "power":
            out = t**self.p
        elif self.kind == "log_power":
            out = np.log1p(t) ** self.p
        elif self.kind == "iterated_log":
            out = np.log1p(np.log1p(t))
        else:
            tt = np.array([r[0] for r in self.table], dtype=float)
            vv = np.array([r[1] for r in self.table], dtype=float)
            if np.any(t < tt[0] * (1 - 1e-12)) or np.any(t > tt[-1] * (1 + 1e-12)):
                raise ValidationError("alpha table does not cover the time grid")
            out = np.interp(np.log(t), np.log(tt), vv)
        if not np.all(np.isfinite(out)):
            raise ValidationError("alpha undefined on the grid")
        return out

    @classmethod
    def parse(cls, text: str) -> "AlphaFunction":
        """``power:p``, ``log_power:p`` or ``iterated_log``."""
        name, _, arg = text.partition(":")
        if name == "iterated_log":
            return cls("iterated_log")
        if name in ("power", "log_power"):
            return cls(name, float(arg) if arg else 1.0)
        raise ValidationError(f"cannot parse alpha spec {text!r}")


def alpha_scan(alpha: AlphaFunction, series: TimeAverageSeries) -> tuple[float, float, bool]:
    """Max of ``alpha(t) value(t)`` over the grid, where it occurs, and whether the
    running max over the last decade beats the one over the decade before."""
    t = series.times
    prod = alpha(t) * series.values
    k = int(np.argmax(prod))
    top = np.log10(t[-1])
    if top - np.log10(t[0]) < 2 - _EDGE:
        raise ValidationError("alpha scan needs at least two decades")
    lt = np.log10(t)
    last = prod[lt > top - 1 + _EDGE]
    prev = prod[(lt > top - 2 + _EDGE) & (lt <= top - 1 + _EDGE)]
    return float(prod[k]), float(t[k]), bool(last.max() > prev.max())
