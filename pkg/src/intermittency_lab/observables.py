"""Expectation values, their time averages, return probabilities and moments.

Closed forms use the eigenbasis: with ``c_k = <psi_k, xi>`` the state is
``sum_k c_k e^{-is lam_k} psi_k`` and every time average reduces to sums of
``(1/t) int_0^t e^{is(lam_j - lam_k)} ds`` weighted by a Hermitian matrix.
Those double sums run in :mod:`intermittency_lab.kernels`.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import kernels
from .errors import ValidationError
from .evolve import EigenSystem, SpectralMeasure, StateVector, spectral_measure

PRUNE_TOL = 1e-15


@dataclass(frozen=True)
class CompactObservable:
    """Finite-rank operator ``sum_i s_i |left_i><right_i|``."""

    singular_values: np.ndarray
    left: np.ndarray
    right: np.ndarray
    positive: bool = False

    def __post_init__(self):
        s = np.asarray(self.singular_values, dtype=float)
        left = np.asarray(self.left, dtype=complex)
        right = np.asarray(self.right, dtype=complex)
        if left.ndim == 1:
            left, right = left[:, None], right[:, None]
        if s.ndim != 1 or left.shape != right.shape or left.shape[1] != s.size:
            raise ValidationError("inconsistent singular triples")
        if np.any(s < 0):
            raise ValidationError("singular values must be nonnegative")
        order = np.argsort(-s, kind="stable")
        s, left, right = s[order], left[:, order], right[:, order]
        for fam in (left, right):
            if fam.shape[1] and np.max(np.abs(fam.conj().T @ fam - np.eye(fam.shape[1]))) > 1e-10:
                raise ValidationError("singular vectors are not orthonormal")
        if self.positive and not np.allclose(left, right, atol=1e-12):
            raise ValidationError("a positive observable needs matching left and right vectors")
        object.__setattr__(self, "singular_values", s)
        object.__setattr__(self, "left", left)
        object.__setattr__(self, "right", right)

    @property
    def dim(self) -> int:
        return self.left.shape[0]

    @property
    def rank(self) -> int:
        return int(np.count_nonzero(self.singular_values))

    def matrix(self) -> np.ndarray:
        return (self.left * self.singular_values) @ self.right.conj().T

    def scaled(self, c: float) -> "CompactObservable":
        if c < 0:
            raise ValidationError("scale must be nonnegative")
        return CompactObservable(c * self.singular_values, self.left, self.right, self.positive)

    @property
    def operator_norm(self) -> float:
        return float(self.singular_values[0]) if self.singular_values.size else 0.0


def projector(vector) -> CompactObservable:
    v = np.asarray(vector, dtype=complex)
    v = v / np.linalg.norm(v)
    return CompactObservable(np.ones(1), v, v, positive=True)


def site_projector(sites, n: int = 0) -> CompactObservable:
    sites = np.asarray(sites)
    v = (sites == n).astype(complex)
    if v.sum() != 1:
        raise ValidationError(f"site {n} not in window")
    return projector(v)


def zero_observable(dim: int) -> CompactObservable:
    return CompactObservable(np.zeros(0), np.zeros((dim, 0)), np.zeros((dim, 0)), positive=True)


def random_positive(dim: int, rank: int, rng: np.random.Generator) -> CompactObservable:
    """Positive rank-``rank`` operator with random orthonormal range and weights in (0, 1]."""
    z = rng.standard_normal((dim, rank)) + 1j * rng.standard_normal((dim, rank))
    q, _ = np.linalg.qr(z)
    s = 1.0 - rng.random(rank)
    return CompactObservable(s, q, q, positive=True)


def from_matrix(a) -> CompactObservable:
    a = np.asarray(a, dtype=complex)
    hermitian = np.allclose(a, a.conj().T, atol=1e-12)
    if hermitian:
        lam, vecs = np.linalg.eigh(a)
        if np.all(lam >= -1e-12):
            keep = lam > 1e-14
            return CompactObservable(lam[keep], vecs[:, keep], vecs[:, keep], positive=True)
    u, s, vh = np.linalg.svd(a)
    keep = s > 1e-14
    return CompactObservable(s[keep], u[:, keep], vh.conj().T[:, keep], positive=False)


@dataclass
class TimeAverageSeries:
    times: np.ndarray
    values: np.ndarray
    quantity: str
    operator_hash: str = ""
    xi_label: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.times.shape != self.values.shape or self.times.ndim != 1:
            raise ValidationError("times and values must be matching 1-d arrays")
        if np.any(np.diff(self.times) <= 0) or np.any(self.times <= 0):
            raise ValidationError("times must be positive and strictly increasing")
        if not np.all(np.isfinite(self.values)):
            raise ValidationError("series values must be finite")

    def scaled(self, c: float) -> "TimeAverageSeries":
        return TimeAverageSeries(self.times, c * self.values, self.quantity, self.operator_hash,
                                 self.xi_label, dict(self.meta))

    def to_csv(self, path_or_file) -> None:
        if hasattr(path_or_file, "write"):
            _write_series(path_or_file, self)
        else:
            with open(path_or_file, "w", newline="") as fh:
                _write_series(fh, self)

    @classmethod
    def from_csv(cls, path) -> "TimeAverageSeries":
        try:
            with open(path, newline="") as fh:
                rows = list(csv.DictReader(fh))
        except OSError as exc:
            raise ValidationError(f"cannot read series {path}: {exc}") from exc
        if not rows:
            raise ValidationError(f"empty series file {path}")
        try:
            return cls(
                np.array([float(r["t"]) for r in rows]),
                np.array([float(r["value"]) for r in rows]),
                rows[0]["quantity"],
                rows[0]["operator_hash"],
                rows[0]["xi_label"],
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"malformed series {path}: {exc}") from exc


def _write_series(fh, s: TimeAverageSeries) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["t", "value", "quantity", "operator_hash", "xi_label"])
    for t, v in zip(s.times, s.values):
        w.writerow([repr(float(t)), repr(float(v)), s.quantity, s.operator_hash, s.xi_label])


def log_time_grid(t_min: float, t_max: float, points_per_decade: int = 32) -> np.ndarray:
    """Decade-aligned log grid ``10^(k/ppd)`` on ``[t_min, t_max]``, endpoints included."""
    if not 0 < t_min < t_max:
        raise ValidationError("need 0 < t_min < t_max")
    ppd = int(points_per_decade)
    lo, hi = np.log10(t_min) * ppd, np.log10(t_max) * ppd
    k = np.arange(np.ceil(lo - 1e-9), np.floor(hi + 1e-9) + 1)
    grid = 10.0 ** (k / ppd)
    pts = np.concatenate(([t_min], grid, [t_max]))
    pts = np.unique(pts)
    # fuse lattice points that sit on top of an endpoint
    keep = np.concatenate(([True], np.diff(np.log10(pts)) > 1e-9))
    return pts[keep]


# ---------------------------------------------------------------- single times


def _check_dim(a: CompactObservable, es: EigenSystem):
    if a.dim != es.dim:
        raise ValidationError(f"observable dim {a.dim} differs from operator dim {es.dim}")


def expectation(a: CompactObservable, es: EigenSystem, xi: StateVector, t: float):
    """``<e^{-itT} xi, A e^{-itT} xi>``; real whenever A is Hermitian."""
    _check_dim(a, es)
    c = es.coefficients(xi) * np.exp(-1j * t * es.eigenvalues)
    state = es.eigenvectors @ c
    val = np.sum(a.singular_values * (state.conj() @ a.left) * (a.right.conj().T @ state))
    if a.positive or np.allclose(a.left, a.right):
        return float(val.real)
    return complex(val)


def _components(a: CompactObservable, es: EigenSystem, xi: StateVector) -> np.ndarray:
    """``g[i, k] = c_k <a_i, psi_k>`` so that ``<a_i, xi(s)> = sum_k g[i,k] e^{-is lam_k}``."""
    c = es.coefficients(xi)
    return (a.left.conj().T @ es.eigenvectors) * c[None, :]


def _keep_mask(g: np.ndarray) -> np.ndarray:
    # components this small contribute below double precision to any phase sum
    mag = np.max(np.abs(np.atleast_2d(g)), axis=0)
    return mag > PRUNE_TOL * max(float(mag.max(initial=0.0)), 1e-300)


def _prune(lam: np.ndarray, g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    keep = _keep_mask(g)
    return np.ascontiguousarray(lam[keep]), g[..., keep]


def _as_times(t) -> tuple[np.ndarray, bool]:
    arr = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(arr < 0):
        raise ValidationError("times must be nonnegative")
    return arr, np.ndim(t) == 0


def time_average_closed(a: CompactObservable, es: EigenSystem, xi: StateVector, t):
    """Exact ``(1/t) int_0^t <xi(s), A xi(s)> ds`` for positive A (t may be an array)."""
    _check_dim(a, es)
    if not a.positive:
        raise ValidationError("closed form needs a positive observable; use the quadrature path")
    times, scalar = _as_times(t)
    out = np.zeros(times.size)
    g_all = _components(a, es, xi)
    for s_i, g in zip(a.singular_values, g_all):
        if s_i == 0:
            continue
        lam, gp = _prune(es.eigenvalues, g)
        if np.allclose(gp.imag, 0.0, atol=0.0):
            gp = np.ascontiguousarray(gp.real)
        out += s_i * kernels.phase_average_quadform(lam, np.ascontiguousarray(gp), times)
    return float(out[0]) if scalar else out


class QuadratureResult(NamedTuple):
    value: float
    error_estimate: float


def _abs_expectation_path(a: CompactObservable, es: EigenSystem, xi: StateVector, s: np.ndarray) -> np.ndarray:
    c = es.coefficients(xi)
    left = a.left.conj().T @ es.eigenvectors
    right = a.right.conj().T @ es.eigenvectors
    out = np.empty(s.size)
    for start in range(0, s.size, 2048):
        blk = s[start:start + 2048]
        ph = np.exp(-1j * np.outer(blk, es.eigenvalues)) * c
        lv = ph @ left.T
        rv = ph @ right.T
        out[start:start + blk.size] = np.abs(np.sum(a.singular_values * lv.conj() * rv, axis=1))
    return out


def time_average_quadrature(a: CompactObservable, es: EigenSystem, xi: StateVector, t: float,
                            n_points: int = 4096) -> QuadratureResult:
    """Composite Simpson rule for ``(1/t) int_0^t |<xi(s), A xi(s)>| ds``.

    ``n_points`` panels (rounded up to even). Simpson is the Richardson
    extrapolation of the trapezoid pair at h and 2h; the reported error is
    its distance to the fine trapezoid, a conservative bound.
    """
    _check_dim(a, es)
    if n_points < 64:
        raise ValidationError("n_points must be >= 64")
    if t <= 0:
        raise ValidationError("t must be positive")
    n = int(n_points) + (int(n_points) % 2)
    s = np.linspace(0.0, t, n + 1)
    f = _abs_expectation_path(a, es, xi, s)
    fine = _trapezoid(f, t / n)
    coarse = _trapezoid(f[::2], 2 * t / n)
    simpson = (4.0 * fine - coarse) / 3.0
    return QuadratureResult(simpson / t, abs(simpson - fine) / t)


def _trapezoid(f: np.ndarray, h: float) -> float:
    return float(h * (np.sum(f) - 0.5 * (f[0] + f[-1])))


# ---------------------------------------------------------------- return probability


def return_probability_avg(es: EigenSystem, xi: StateVector, t):
    """``(1/t) int_0^t |<xi, e^{-isT} xi>|^2 ds`` from the spectral weights."""
    if abs(xi.norm - 1.0) > 1e-10:
        raise ValidationError("return probability needs a normalized state")
    times, scalar = _as_times(t)
    mu = spectral_measure(es, xi)
    lam, w = _prune(mu.locations, mu.weights)
    out = kernels.phase_average_quadform(lam, np.ascontiguousarray(w), times)
    return float(out[0]) if scalar else out


def return_probability_series(es: EigenSystem, xi: StateVector, times) -> TimeAverageSeries:
    times = np.asarray(times, dtype=float)
    return TimeAverageSeries(times, return_probability_avg(es, xi, times), "return_prob",
                             es.source_hash, xi.label)


def expectation_series(a: CompactObservable, es: EigenSystem, xi: StateVector, times) -> TimeAverageSeries:
    times = np.asarray(times, dtype=float)
    return TimeAverageSeries(times, time_average_closed(a, es, xi, times), "expectation",
                             es.source_hash, xi.label)


# ---------------------------------------------------------------- moments


def moment_q(es: EigenSystem, xi: StateVector, t_grid, q: float, method: str = "closed",
             step: float | None = None) -> TimeAverageSeries:
    """Time-averaged ``sum_n |n|^q |<e^{-isT} xi, e_n>|^2`` on ``t_grid``.

    ``method="closed"`` sums the exact phase averages; ``"quadrature"``
    integrates on an s-grid refined to resolve the fastest phase and merged
    with the requested times.
    """
    if es.sites is None:
        raise ValidationError("moments need a site-labelled basis")
    if not q > 0:
        raise ValidationError("q must be positive")
    times = np.asarray(t_grid, dtype=float)
    weight = np.abs(es.sites).astype(float) ** q
    c = es.coefficients(xi)
    keep = _keep_mask(c)
    lam = np.ascontiguousarray(es.eigenvalues[keep])
    g = es.eigenvectors[:, keep] * c[keep][None, :]
    if method == "closed":
        m = g.conj().T @ (weight[:, None] * g)
        if np.isrealobj(g) or np.allclose(m.imag, 0.0, atol=0.0):
            m = m.real
        vals = kernels.phase_average_matrix(lam, np.ascontiguousarray(m), times)
    elif method == "quadrature":
        width = float(lam.max() - lam.min()) if lam.size > 1 else 1.0
        ds = step if step is not None else 0.05 / max(width, 1e-12)
        s = np.union1d(np.arange(0.0, times.max(), ds), times)
        s = np.union1d(s, [0.0])
        dens = np.empty(s.size)
        for start in range(0, s.size, 1024):
            blk = s[start:start + 1024]
            amp = np.exp(-1j * np.outer(blk, lam)) @ g.T
            dens[start:start + blk.size] = np.abs(amp) ** 2 @ weight
        cum = np.concatenate(([0.0], np.cumsum(0.5 * np.diff(s) * (dens[1:] + dens[:-1]))))
        vals = cum[np.searchsorted(s, times)] / times
    else:
        raise ValidationError(f"unknown method {method!r}")
    return TimeAverageSeries(times, np.maximum(vals, 0.0), f"moment_{q:g}", es.source_hash, xi.label,
                             {"q": float(q), "method": method})


# ---------------------------------------------------------------- trace norm / Lipschitz / Last


def trace_norm(a) -> float:
    if isinstance(a, CompactObservable):
        return float(np.sum(a.singular_values))
    return float(np.sum(np.linalg.svd(np.asarray(a), compute_uv=False)))


def lipschitz_constant(mu: SpectralMeasure, l_min: float, l_max: float = 1.0) -> tuple[float, dict]:
    """Best ``C`` with ``mu(I) <= C l(I)`` over intervals of length in ``[l_min, l_max]``.

    Atoms make the true constant infinite; ``l_min`` is the resolution floor.
    """
    if not l_min > 0:
        raise ValidationError("l_min must be positive")
    keep = mu.weights > 0
    if not np.any(keep):
        raise ValidationError("empty measure")
    order = np.argsort(mu.locations[keep], kind="stable")
    x = np.ascontiguousarray(mu.locations[keep][order], dtype=float)
    w = np.ascontiguousarray(mu.weights[keep][order], dtype=float)
    best, i, j = kernels.lipschitz_sweep(x, w, float(l_min), float(l_max))
    return float(best), {
        "interval": (float(x[i]), float(max(x[j], x[i] + l_min))),
        "l_min": float(l_min),
        "atoms": int(x.size),
    }


@dataclass
class LastBoundReport:
    times: np.ndarray
    averages: np.ndarray
    trace_norm: float
    empirical_constant: float
    lipschitz_constant: float
    clipped: int
    log_factor_slope: float
    decay_consistent: bool
    lipschitz_report: dict = field(default_factory=dict)

    @property
    def ratio(self) -> float:
        return self.empirical_constant / self.lipschitz_constant

    def as_dict(self) -> dict:
        return {
            "times": self.times.tolist(),
            "averages": self.averages.tolist(),
            "trace_norm": self.trace_norm,
            "empirical_constant": self.empirical_constant,
            "lipschitz_constant": self.lipschitz_constant,
            "ratio": self.ratio,
            "clipped": self.clipped,
            "log_factor_slope": self.log_factor_slope,
            "decay_consistent": self.decay_consistent,
        }


def last_bound_check(a: CompactObservable, es: EigenSystem, xi: StateVector, t_grid, l_min: float,
                     max_log_slope: float = 0.5) -> LastBoundReport:
    """Smallest ``C`` with ``<|A_xi|>_t <= C ||A||_1 / t`` on the resolution-valid range.

    Times beyond ``1/l_min`` are clipped. ``decay_consistent`` asks whether
    ``t <|A_xi|>_t`` grows slower than ``t^max_log_slope`` (a log factor passes,
    a stationary average does not).
    """
    times = np.asarray(t_grid, dtype=float)
    valid = times <= 1.0 / l_min
    clipped = int((~valid).sum())
    times = times[valid]
    if times.size < 2:
        raise ValidationError("fewer than two times survive the resolution clip")
    avg = time_average_closed(a, es, xi, times)
    tn = trace_norm(a)
    if tn == 0:
        raise ValidationError("zero observable")
    scaled = times * avg / tn
    c_emp = float(np.max(scaled))
    mu = spectral_measure(es, xi)
    c_lip, rep = lipschitz_constant(mu, l_min)
    slope = float(np.polyfit(np.log(times), np.log(np.maximum(scaled, 1e-300)), 1)[0])
    return LastBoundReport(times, avg, tn, c_emp, c_lip, clipped, slope, slope < max_log_slope, rep)


def parse_observable(spec: str, sites, seed: int = 0) -> CompactObservable:
    """``proj:e<n>`` site projector, ``rank:<r>`` random positive rank-r, or ``zero``."""
    sites = np.asarray(sites)
    kind, _, arg = spec.partition(":")
    if kind == "proj" and arg.startswith("e"):
        try:
            n = int(arg[1:])
        except ValueError:
            raise ValidationError(f"bad projector spec {spec!r}") from None
        return site_projector(sites, n)
    if kind == "rank":
        from .operators import substream

        return random_positive(sites.size, int(arg), substream(seed, 0, 2))
    if kind == "zero":
        return zero_observable(sites.size)
    raise ValidationError(f"unknown observable spec {spec!r}")
