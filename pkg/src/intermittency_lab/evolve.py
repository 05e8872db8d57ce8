"""Exact spectral decomposition, propagation and resolvents on finite truncations."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import linalg as sla

from .errors import SolverError, ValidationError
from .operators import (
    ContinuumSchrodinger,
    DenseHermitian,
    JacobiOperator,
    operator_hash,
)

DEGENERACY_TOL = 1e-10


@dataclass(frozen=True)
class EigenSystem:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    source_hash: str = ""
    sites: np.ndarray | None = None

    @property
    def dim(self) -> int:
        return self.eigenvalues.size

    def coefficients(self, xi: "StateVector") -> np.ndarray:
        """``c_k = <psi_k, xi>``."""
        if xi.amplitudes.size != self.dim:
            raise ValidationError(f"state has dim {xi.amplitudes.size}, operator {self.dim}")
        return self.eigenvectors.conj().T @ xi.amplitudes


@dataclass(frozen=True)
class StateVector:
    amplitudes: np.ndarray
    sites: np.ndarray | None = None
    label: str = ""

    def __post_init__(self):
        a = np.asarray(self.amplitudes, dtype=complex)
        if a.ndim != 1 or not np.all(np.isfinite(a)):
            raise ValidationError("state amplitudes must be a finite 1-d array")
        object.__setattr__(self, "amplitudes", a)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))


@dataclass(frozen=True)
class SpectralMeasure:
    locations: np.ndarray
    weights: np.ndarray
    groups: list = field(default_factory=list)

    def __post_init__(self):
        if np.any(self.weights < 0):
            raise ValidationError("spectral weights must be nonnegative")
        if not self.groups:
            object.__setattr__(self, "groups", degeneracy_groups(self.locations))

    @property
    def total_mass(self) -> float:
        return float(np.sum(self.weights))

    def group_weights(self) -> np.ndarray:
        return np.array([self.weights[g].sum() for g in self.groups])

    def wiener_limit(self) -> float:
        """``lim_t (1/t) int_0^t |<xi, e^{-isT} xi>|^2 ds`` = sum of squared group weights."""
        return float(np.sum(self.group_weights() ** 2))

    def mean_spacing(self) -> float:
        span = float(self.locations.max() - self.locations.min())
        return span / max(len(self.groups) - 1, 1)

    def scaled(self, s: float) -> "SpectralMeasure":
        return SpectralMeasure(self.locations, s * self.weights, self.groups)


def degeneracy_groups(locations: np.ndarray, tol: float = DEGENERACY_TOL) -> list:
    loc = np.asarray(locations, dtype=float)
    if loc.size == 0:
        return []
    order = np.argsort(loc, kind="stable")
    breaks = np.nonzero(np.diff(loc[order]) > tol)[0] + 1
    return [np.sort(g) for g in np.split(order, breaks)]


# ---------------------------------------------------------------- eigensystems


def _hermitian_matrix(op) -> np.ndarray:
    m = op.matrix() if hasattr(op, "matrix") else np.asarray(op)
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValidationError("operator must be square")
    if np.max(np.abs(m - m.conj().T), initial=0.0) > 1e-12 * max(1.0, np.max(np.abs(m))):
        raise ValidationError("operator is not Hermitian")
    return m


def _sites_of(op) -> np.ndarray | None:
    if isinstance(op, JacobiOperator):
        return op.sites
    return None


def eigendecompose(op, verify: bool = True, cache_dir=None) -> EigenSystem:
    """Full spectral decomposition with ascending eigenvalues.

    Tridiagonal operators go through LAPACK's tridiagonal solver; anything
    else must be Hermitian and is handed to ``eigh``.
    """
    key = operator_hash(op)
    if cache_dir is not None:
        path = Path(cache_dir) / f"{key}.npz"
        if path.exists():
            return load_eigensystem(path)
    try:
        if isinstance(op, (JacobiOperator, ContinuumSchrodinger)):
            d, e = op.tridiagonal()
            try:
                lam, psi = sla.eigh_tridiagonal(d, e)
            except sla.LinAlgError:
                # MRRR occasionally fails on clustered spectra; dense divide-and-conquer does not
                lam, psi = sla.eigh(op.matrix(), driver="evd")
            scale = max(float(np.max(np.abs(d))) + 2.0 * float(np.max(np.abs(e), initial=0.0)), 1.0)
            if verify:
                hpsi = d[:, None] * psi
                hpsi[:-1] += e[:, None] * psi[1:]
                hpsi[1:] += e[:, None] * psi[:-1]
                _check_residual(hpsi, lam, psi, scale)
        else:
            m = _hermitian_matrix(op)
            lam, psi = np.linalg.eigh(m)
            if verify:
                _check_residual(m @ psi, lam, psi, max(float(np.max(np.abs(lam), initial=0.0)), 1.0))
    except (np.linalg.LinAlgError, sla.LinAlgError) as exc:
        raise SolverError(f"eigensolver failed: {exc}") from exc
    lam.setflags(write=False)
    psi.setflags(write=False)
    es = EigenSystem(lam, psi, key, _sites_of(op))
    if cache_dir is not None:
        save_eigensystem(es, Path(cache_dir) / f"{key}.npz")
    return es


def _check_residual(hpsi, lam, psi, scale):
    res = np.max(np.linalg.norm(hpsi - psi * lam, axis=0), initial=0.0)
    if res > 1e-9 * scale:
        raise SolverError(f"eigen residual {res:.3g} above tolerance")


def lowest_eigenvalues(op, count: int = 1) -> np.ndarray:
    """Bottom of the spectrum of a tridiagonal operator without eigenvectors."""
    d, e = op.tridiagonal()
    return sla.eigvalsh_tridiagonal(d, e, select="i", select_range=(0, count - 1))


def spectrum_extremes(op) -> tuple[float, float]:
    d, e = op.tridiagonal()
    n = d.size
    lo = sla.eigvalsh_tridiagonal(d, e, select="i", select_range=(0, 0))[0]
    hi = sla.eigvalsh_tridiagonal(d, e, select="i", select_range=(n - 1, n - 1))[0]
    return float(lo), float(hi)


def save_eigensystem(es: EigenSystem, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    vecs = es.eigenvectors
    vec_dtype = "<c16" if np.iscomplexobj(vecs) else "<f8"
    tmp = path.with_suffix(".tmp.npz")
    np.savez(
        tmp,
        eigenvalues=es.eigenvalues.astype("<f8"),
        eigenvectors=vecs.astype(vec_dtype),
        source_hash=np.array(es.source_hash),
        sites=np.array([]) if es.sites is None else es.sites.astype("<i8"),
    )
    tmp.replace(path)


def load_eigensystem(path) -> EigenSystem:
    with np.load(path) as z:
        sites = z["sites"]
        return EigenSystem(
            z["eigenvalues"].astype(float),
            z["eigenvectors"],
            str(z["source_hash"]),
            None if sites.size == 0 else sites.astype(int),
        )


# ---------------------------------------------------------------- states


def site_state(sites: np.ndarray, n: int = 0) -> StateVector:
    sites = np.asarray(sites)
    idx = np.nonzero(sites == n)[0]
    if idx.size != 1:
        raise ValidationError(f"site {n} not in window")
    a = np.zeros(sites.size, dtype=complex)
    a[idx[0]] = 1.0
    return StateVector(a, sites, f"e{n}")


def eigen_state(es: EigenSystem, k: int) -> StateVector:
    return StateVector(es.eigenvectors[:, k].astype(complex), es.sites, f"psi{k}")


def evolve(es: EigenSystem, xi: StateVector, t: float) -> StateVector:
    """``e^{-itT} xi`` through the eigenbasis."""
    c = es.coefficients(xi)
    amp = es.eigenvectors @ (np.exp(-1j * t * es.eigenvalues) * c)
    return StateVector(amp, xi.sites, xi.label)


def evolve_many(es: EigenSystem, xi: StateVector, times) -> np.ndarray:
    """Rows are ``e^{-itT} xi`` for each t."""
    c = es.coefficients(xi)
    phases = np.exp(-1j * np.outer(np.asarray(times, dtype=float), es.eigenvalues)) * c
    return phases @ es.eigenvectors.T


def spectral_measure(es: EigenSystem, xi: StateVector) -> SpectralMeasure:
    c = es.coefficients(xi)
    return SpectralMeasure(es.eigenvalues, np.abs(c) ** 2)


# ---------------------------------------------------------------- resolvent


def resolvent_apply(op, z: complex, u: StateVector | np.ndarray) -> np.ndarray:
    """Solve ``(H - z) w = u``."""
    z = complex(z)
    if z.imag == 0:
        raise ValidationError("resolvent needs Im z != 0")
    rhs = np.asarray(u.amplitudes if isinstance(u, StateVector) else u, dtype=complex)
    if isinstance(op, (JacobiOperator, ContinuumSchrodinger)):
        d, e = op.tridiagonal()
        if rhs.size != d.size:
            raise ValidationError("dimension mismatch")
        ab = np.zeros((3, d.size), dtype=complex)
        ab[0, 1:] = e
        ab[1] = d - z
        ab[2, :-1] = e
        w = sla.solve_banded((1, 1), ab, rhs)
        r = (d - z) * w
        r[:-1] += e * w[1:]
        r[1:] += e * w[:-1]
    else:
        m = _hermitian_matrix(op)
        if rhs.size != m.shape[0]:
            raise ValidationError("dimension mismatch")
        a = m - z * np.eye(m.shape[0])
        w = np.linalg.solve(a, rhs)
        r = a @ w
    resid = float(np.linalg.norm(r - rhs))
    if not np.isfinite(resid) or resid > 1e-10 * max(1.0, float(np.linalg.norm(rhs))):
        raise SolverError(f"resolvent residual {resid:.3g} above tolerance")
    return w


# ---------------------------------------------------------------- horizon


def horizon(half_width: int, support_radius: int = 0, safety: float = 0.8) -> float:
    """Largest faithful time for unit hopping: ``safety (N - r0) / 2``."""
    if not 0 < safety < 1:
        raise ValidationError("safety must lie in (0, 1)")
    if not 0 <= support_radius < half_width:
        raise ValidationError("support radius must be below the half width")
    return safety * (half_width - support_radius) / 2.0


def leakage(es: EigenSystem, xi: StateVector, times, radius: float) -> np.ndarray:
    """Mass of ``e^{-itT} xi`` on sites with ``|n| > radius`` at each t."""
    if es.sites is None:
        raise ValidationError("leakage needs a site-labelled basis")
    outer = np.abs(es.sites) > radius
    out = []
    for chunk in np.array_split(np.atleast_1d(np.asarray(times, dtype=float)), max(1, len(np.atleast_1d(times)) // 16)):
        rows = evolve_many(es, xi, chunk)
        out.append(np.sum(np.abs(rows[:, outer]) ** 2, axis=1))
    return np.concatenate(out)


def support_radius(xi: StateVector, tol: float = 0.0) -> int:
    if xi.sites is None:
        raise ValidationError("support radius needs site labels")
    nz = np.abs(xi.amplitudes) > tol
    return int(np.max(np.abs(xi.sites[nz]), initial=0))


def certify_times(es: EigenSystem, xi: StateVector, times, safety: float = 0.8,
                  leak_tol: float = 1e-8) -> tuple[np.ndarray, dict]:
    """Split ``times`` into the faithful part and report how it was certified.

    Times under the ballistic horizon are kept outright. Later times are kept
    only while the measured mass beyond ``0.9 N`` stays under ``leak_tol``.
    """
    times = np.asarray(times, dtype=float)
    n = int(np.max(np.abs(es.sites)))
    r0 = support_radius(xi)
    t_ball = horizon(n, r0, safety) if r0 < n else 0.0
    keep = times <= t_ball
    late = times[~keep]
    info = {"ballistic_horizon": t_ball, "measured": False, "dropped": 0}
    if late.size:
        leak = leakage(es, xi, late, 0.9 * n)
        ok = np.cumprod(leak < leak_tol).astype(bool)
        keep[~keep] = ok
        info["measured"] = True
        info["max_leakage"] = float(leak[ok].max()) if ok.any() else None
        info["dropped"] = int((~ok).sum())
    return times[keep], info


# ---------------------------------------------------------------- SR / SD


def _embed_window(small: JacobiOperator, big: JacobiOperator) -> slice:
    ns, nb = small.half_width, big.half_width
    if ns > nb:
        raise ValidationError("sequence operator larger than the limit")
    window = slice(nb - ns, nb + ns + 1)
    return window


def sr_sd_check(op_sequence, limit_op, u, t: float, z: complex = 1j) -> list[dict]:
    """Resolvent and dynamical distances of zero-padded truncations to the limit.

    Each ``T_n`` acts as ``T_n (+) 0`` on the limit's space, so
    ``R_z(T_n (+) 0) u = R_z(T_n) P u - (1 - P) u / z`` and
    ``e^{itT_n (+) 0} u = e^{itT_n} P u + (1 - P) u``.
    """
    u = np.asarray(u.amplitudes if isinstance(u, StateVector) else u, dtype=complex)
    if u.size != limit_op.dim:
        raise ValidationError("test vector does not live on the limit's window")
    ref_res = resolvent_apply(limit_op, z, u)
    es_ref = eigendecompose(limit_op)
    ref_dyn = _forward(es_ref, u, t)
    rows = []
    for op in op_sequence:
        if isinstance(op, JacobiOperator) and isinstance(limit_op, JacobiOperator):
            window = _embed_window(op, limit_op)
        else:
            if op.dim > limit_op.dim:
                raise ValidationError("sequence operator larger than the limit")
            window = slice(0, op.dim)
        pu = u[window]
        res = -u / z
        res[window] = resolvent_apply(op, z, pu)
        dyn = u.copy()
        dyn[window] = _forward(eigendecompose(op), pu, t)
        rows.append({
            "dim": op.dim,
            "resolvent_error": float(np.linalg.norm(res - ref_res)),
            "dynamical_error": float(np.linalg.norm(dyn - ref_dyn)),
        })
    return rows


def _forward(es: EigenSystem, u: np.ndarray, t: float) -> np.ndarray:
    # e^{+itT} u, the strong-dynamical convention
    c = es.eigenvectors.conj().T @ u
    return es.eigenvectors @ (np.exp(1j * t * es.eigenvalues) * c)
