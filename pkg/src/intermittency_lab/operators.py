"""Finite realizations of the three operator classes, the Anderson ensemble,
and the operator-space metrics.

Jacobi matrices live on the window of sites ``-N..N`` with Dirichlet
truncation. Continuum Schrodinger operators live on the interior points of a
uniform grid over ``[-L, L]`` with the 3-point Laplacian.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Union

import numpy as np

from .errors import ValidationError

HERMITIAN_TOL = 1e-12
NORM_SLACK = 1e-9


class MetricValue(NamedTuple):
    value: float
    tail_bound: float


# ---------------------------------------------------------------- types


@dataclass(frozen=True)
class DenseHermitian:
    """Self-adjoint matrix with operator norm at most ``norm_cap``."""

    entries: np.ndarray
    norm_cap: float
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        m = np.asarray(self.entries, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] == 0:
            raise ValidationError(f"entries must be a nonempty square array, got {m.shape}")
        if not self.norm_cap > 0:
            raise ValidationError("norm_cap must be positive")
        if np.max(np.abs(m - m.conj().T)) > HERMITIAN_TOL:
            raise ValidationError("entries are not conjugate-symmetric")
        radius = float(np.max(np.abs(np.linalg.eigvalsh(m))))
        if radius > self.norm_cap + NORM_SLACK:
            raise ValidationError(f"spectral radius {radius:.6g} exceeds norm cap {self.norm_cap}")
        m.setflags(write=False)
        object.__setattr__(self, "entries", m)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def matrix(self) -> np.ndarray:
        return self.entries


@dataclass(frozen=True)
class JacobiOperator:
    """``(Mu)_j = u_{j-1} + u_{j+1} + v_j u_j`` on sites ``-N..N``."""

    potential: np.ndarray
    bound: float
    boundary: str = "dirichlet"
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.array(self.potential, dtype=float)
        if v.ndim != 1 or v.size % 2 != 1:
            raise ValidationError("potential must be 1-d with odd length 2N+1")
        if not self.bound > 0:
            raise ValidationError("bound must be positive")
        if v.size and np.max(np.abs(v)) > self.bound:
            raise ValidationError(f"|v_j| exceeds bound {self.bound}")
        if self.boundary != "dirichlet":
            raise ValidationError("only Dirichlet truncation is supported")
        v.setflags(write=False)
        object.__setattr__(self, "potential", v)

    @property
    def half_width(self) -> int:
        return (self.potential.size - 1) // 2

    @property
    def dim(self) -> int:
        return self.potential.size

    @property
    def sites(self) -> np.ndarray:
        n = self.half_width
        return np.arange(-n, n + 1)

    def tridiagonal(self) -> tuple[np.ndarray, np.ndarray]:
        return self.potential, np.ones(self.dim - 1)

    def matrix(self) -> np.ndarray:
        d, e = self.tridiagonal()
        return np.diag(d) + np.diag(e, 1) + np.diag(e, -1)


@dataclass(frozen=True)
class ContinuumSchrodinger:
    """``-u'' + V u`` on the interior points of a uniform grid over ``[-L, L]``."""

    half_width: float
    spacing: float
    potential: np.ndarray
    cap: float
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (self.half_width > 0 and self.spacing > 0 and self.cap > 0):
            raise ValidationError("half_width, spacing and cap must be positive")
        m = _panel_count(self.half_width, self.spacing)
        v = np.array(self.potential, dtype=float)
        if v.shape != (m - 1,):
            raise ValidationError(f"expected {m - 1} interior samples, got {v.shape}")
        if np.max(np.abs(v)) > self.cap + 1e-12:
            raise ValidationError(f"|V| exceeds cap {self.cap}")
        v.setflags(write=False)
        object.__setattr__(self, "potential", v)

    @property
    def dim(self) -> int:
        return self.potential.size

    @property
    def grid(self) -> np.ndarray:
        return continuum_grid(self.half_width, self.spacing)

    def tridiagonal(self) -> tuple[np.ndarray, np.ndarray]:
        h2 = self.spacing**2
        return 2.0 / h2 + self.potential, np.full(self.dim - 1, -1.0 / h2)

    def matrix(self) -> np.ndarray:
        d, e = self.tridiagonal()
        return np.diag(d) + np.diag(e, 1) + np.diag(e, -1)


@dataclass(frozen=True)
class UniformDisorder:
    """Uniform law on ``[-b, b]``."""

    kind: str = "uniform"


@dataclass(frozen=True)
class DiscreteDisorder:
    values: tuple[float, ...]
    probs: tuple[float, ...]
    kind: str = "discrete"

    def __post_init__(self):
        if len(self.values) == 0 or len(self.values) != len(self.probs):
            raise ValidationError("discrete disorder needs matching nonempty values/probs")
        if any(p < 0 for p in self.probs) or abs(sum(self.probs) - 1.0) > 1e-12:
            raise ValidationError("probabilities must be nonnegative and sum to 1")


Disorder = Union[UniformDisorder, DiscreteDisorder]


@dataclass(frozen=True)
class AndersonSpec:
    half_width: int
    disorder_bound: float
    distribution: Disorder = UniformDisorder()
    seed: int = 0

    def __post_init__(self):
        if int(self.half_width) < 1:
            raise ValidationError("half_width must be >= 1")
        if not self.disorder_bound > 0:
            raise ValidationError("disorder_bound must be positive")
        if not 0 <= int(self.seed) < 2**64:
            raise ValidationError("seed must be a 64-bit unsigned integer")
        dist = self.distribution
        if isinstance(dist, DiscreteDisorder):
            if max(abs(x) for x in dist.values) > self.disorder_bound:
                raise ValidationError("support of the disorder law leaves [-b, b]")
        elif not isinstance(dist, UniformDisorder):
            raise ValidationError(f"unknown disorder descriptor {dist!r}")


Operator = Union[DenseHermitian, JacobiOperator, ContinuumSchrodinger]


# ---------------------------------------------------------------- helpers


def _panel_count(half_width: float, spacing: float) -> int:
    m = 2.0 * half_width / spacing
    if abs(m - round(m)) > 1e-9 * max(1.0, m) or round(m) < 2:
        raise ValidationError("2L/h must be an integer >= 2")
    return int(round(m))


def continuum_grid(half_width: float, spacing: float) -> np.ndarray:
    m = _panel_count(half_width, spacing)
    return -half_width + spacing * np.arange(1, m)


def disorder_from_dict(d: dict) -> Disorder:
    kind = d.get("kind", "uniform")
    if kind == "uniform":
        return UniformDisorder()
    if kind == "discrete":
        return DiscreteDisorder(tuple(map(float, d["values"])), tuple(map(float, d["probs"])))
    if kind == "bernoulli":
        b = float(d["bound"])
        return DiscreteDisorder((-b, b), (0.5, 0.5))
    raise ValidationError(f"invalid distribution descriptor {d!r}")


def disorder_to_dict(dist: Disorder) -> dict:
    if isinstance(dist, DiscreteDisorder):
        return {"kind": "discrete", "values": list(dist.values), "probs": list(dist.probs)}
    return {"kind": "uniform"}


def substream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for ``(seed, *key)``; order of creation is irrelevant."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


def _draw(rng: np.random.Generator, dist: Disorder, b: float, size: int) -> np.ndarray:
    u = rng.random(size)
    if isinstance(dist, UniformDisorder):
        return -b + 2.0 * b * u
    cdf = np.cumsum(dist.probs)
    cdf[-1] = 1.0
    idx = np.searchsorted(cdf, u, side="right")
    return np.asarray(dist.values, dtype=float)[np.minimum(idx, len(cdf) - 1)]


# ---------------------------------------------------------------- constructors


def build_free_laplacian(n: int) -> JacobiOperator:
    if int(n) < 1:
        raise ValidationError("half width must be >= 1")
    n = int(n)
    return JacobiOperator(np.zeros(2 * n + 1), bound=1.0, provenance={"kind": "free"})


def build_jacobi(potential, bound: float | None = None, kind: str = "jacobi") -> JacobiOperator:
    v = np.asarray(potential, dtype=float)
    if bound is None:
        bound = max(float(np.max(np.abs(v))), 1.0)
    return JacobiOperator(v, bound=bound, provenance={"kind": kind})


def sparse_barrier_potential(n: int, height: float, ratio: float = 2.0) -> np.ndarray:
    """Barriers of ``height`` at sites ``+-round(ratio^m)`` inside ``-n..n``, zero elsewhere."""
    if not ratio > 1:
        raise ValidationError("barrier ratio must exceed 1")
    v = np.zeros(2 * n + 1)
    p = 1.0
    while round(p) <= n:
        k = int(round(p))
        v[n + k] = height
        v[n - k] = height
        p *= ratio
    return v


def sample_anderson(spec: AndersonSpec, realization: int = 0) -> JacobiOperator:
    """Draw ``v_j`` i.i.d. from the disorder law.

    Sites ``j >= 0`` and ``j < 0`` use two substreams read outward from the
    origin, so a larger window extends a smaller one at the same seed.
    """
    n, b = int(spec.half_width), float(spec.disorder_bound)
    right = _draw(substream(spec.seed, realization, 0), spec.distribution, b, n + 1)
    left = _draw(substream(spec.seed, realization, 1), spec.distribution, b, n)
    v = np.concatenate((left[::-1], right))
    prov = {
        "kind": "anderson",
        "seed": int(spec.seed),
        "realization": int(realization),
        "distribution": disorder_to_dict(spec.distribution),
    }
    return JacobiOperator(v, bound=b, provenance=prov)


def vk_potential(v, cap: float, k: int, grid) -> np.ndarray:
    """``(k/(k+1)) 1_{|x|<k} V(x) - C / ((k+1)(|x|+1))`` on the grid."""
    v = np.asarray(v, dtype=float)
    x = np.asarray(grid, dtype=float)
    if int(k) < 1:
        raise ValidationError("k must be >= 1")
    if not cap > 0:
        raise ValidationError("cap must be positive")
    if v.shape != x.shape:
        raise ValidationError("samples and grid differ in shape")
    if np.max(np.abs(v), initial=0.0) > cap + 1e-12:
        raise ValidationError(f"input potential exceeds cap {cap}")
    k = int(k)
    inside = np.abs(x) < k
    return (k / (k + 1.0)) * np.where(inside, v, 0.0) - cap / ((k + 1.0) * (np.abs(x) + 1.0))


def build_continuum(half_width: float, spacing: float, potential, cap: float, **prov) -> ContinuumSchrodinger:
    return ContinuumSchrodinger(half_width, spacing, np.asarray(potential, dtype=float), cap,
                                provenance={"kind": "continuum", **prov})


def build_vk_operator(half_width: float, spacing: float, cap: float, k: int, base=None) -> ContinuumSchrodinger:
    """Continuum operator with the ``V_k`` potential built from ``base`` (default V=0)."""
    x = continuum_grid(half_width, spacing)
    v0 = np.zeros_like(x) if base is None else np.broadcast_to(np.asarray(base, dtype=float), x.shape)
    return build_continuum(half_width, spacing, vk_potential(v0, cap, k, x), cap, vk=int(k))


def truncate(op, new_size):
    """Keep the central window; ``new_size`` is a half width (sites or length)."""
    if isinstance(op, JacobiOperator):
        n_new, n = int(new_size), op.half_width
        if not 1 <= n_new <= n:
            raise ValidationError(f"cannot truncate half width {n} to {new_size}")
        if n_new == n:
            return op
        prov = dict(op.provenance)
        prov["truncation"] = {"from": n, "to": n_new}
        return JacobiOperator(op.potential[n - n_new: n + n_new + 1], op.bound, op.boundary, prov)
    if isinstance(op, ContinuumSchrodinger):
        if not 0 < new_size <= op.half_width:
            raise ValidationError(f"cannot truncate box {op.half_width} to {new_size}")
        if new_size == op.half_width:
            return op
        x = op.grid
        keep = np.abs(x) < new_size - 0.5 * op.spacing
        prov = dict(op.provenance)
        prov["truncation"] = {"from": op.half_width, "to": float(new_size)}
        return ContinuumSchrodinger(float(new_size), op.spacing, op.potential[keep], op.cap, prov)
    raise ValidationError(f"cannot truncate {type(op).__name__}")


def operator_hash(op) -> str:
    """Stable fingerprint of the represented matrix."""
    h = hashlib.sha256()
    if isinstance(op, (JacobiOperator, ContinuumSchrodinger)):
        d, e = op.tridiagonal()
        h.update(b"tri")
        h.update(np.ascontiguousarray(d, dtype="<f8").tobytes())
        h.update(np.ascontiguousarray(e, dtype="<f8").tobytes())
    else:
        m = op.matrix() if hasattr(op, "matrix") else np.asarray(op)
        h.update(b"dense")
        h.update(np.ascontiguousarray(m, dtype="<c16").tobytes())
    return h.hexdigest()[:16]


# ---------------------------------------------------------------- metrics


def metric_xa(t1: DenseHermitian, t2: DenseHermitian, basis_order: int | None = None) -> MetricValue:
    """``sum_j min(2^-j, ||(T - T') e_j||)`` over the first ``basis_order`` basis vectors."""
    a, b = _dense(t1), _dense(t2)
    if a.shape != b.shape:
        raise ValidationError(f"dimension mismatch {a.shape} vs {b.shape}")
    dim = a.shape[0]
    m = dim if basis_order is None else int(basis_order)
    if not 1 <= m <= dim:
        raise ValidationError("basis_order must lie in [1, dim]")
    cols = np.linalg.norm((a - b)[:, :m], axis=0)
    value = float(np.sum(np.minimum(2.0 ** -np.arange(m), cols)))
    return MetricValue(value, 2.0 ** (1 - m))


def metric_xb(v, u) -> MetricValue:
    """``sum_j 2^-|j| min(1, |v_j - u_j|)`` on a window centred at site 0."""
    v = np.asarray(v, dtype=float)
    u = np.asarray(u, dtype=float)
    if v.shape != u.shape or v.ndim != 1 or v.size % 2 != 1:
        raise ValidationError("potentials must share one odd-length centred window")
    n = (v.size - 1) // 2
    sites = np.arange(-n, n + 1)
    value = float(np.sum(2.0 ** -np.abs(sites) * np.minimum(1.0, np.abs(v - u))))
    return MetricValue(value, 2.0 ** (1 - n))


def metric_xc(v, u, grid, j_max: int) -> MetricValue:
    """``sum_{j<=j_max} min(2^-j, sup_{|x|<j} |V - U|)``; the j=0 ball is empty."""
    v = np.asarray(v, dtype=float)
    u = np.asarray(u, dtype=float)
    x = np.asarray(grid, dtype=float)
    if v.shape != u.shape or v.shape != x.shape:
        raise ValidationError("samples and grid must share a shape")
    j_max = int(j_max)
    if j_max < 0:
        raise ValidationError("j_max must be >= 0")
    h = float(np.min(np.diff(x))) if x.size > 1 else 0.0
    if j_max > 0 and (x.min() > -j_max + h + 1e-12 or x.max() < j_max - h - 1e-12):
        raise ValidationError(f"grid does not cover B(0, {j_max})")
    diff = np.abs(v - u)
    ax = np.abs(x)
    total = 0.0
    for j in range(1, j_max + 1):
        sup = float(np.max(diff[ax < j], initial=0.0))
        total += min(2.0**-j, sup)
    return MetricValue(total, 2.0**-j_max)


def _dense(op) -> np.ndarray:
    if hasattr(op, "matrix"):
        return np.asarray(op.matrix(), dtype=complex)
    return np.asarray(op, dtype=complex)


# ---------------------------------------------------------------- serialization


def to_json(op) -> dict:
    prov = dict(op.provenance)
    meta = {"seed": prov.pop("seed", None), "truncation": prov.pop("truncation", None), **prov}
    kind = meta.pop("kind", None)
    if isinstance(op, JacobiOperator):
        return {
            "kind": kind or "jacobi",
            "half_width": op.half_width,
            "bound": op.bound,
            "potential": op.potential.tolist(),
            "provenance": meta,
        }
    if isinstance(op, ContinuumSchrodinger):
        return {
            "kind": "continuum",
            "half_width": op.half_width,
            "spacing": op.spacing,
            "cap": op.cap,
            "potential": op.potential.tolist(),
            "provenance": meta,
        }
    if isinstance(op, DenseHermitian):
        flat = op.entries.ravel()
        return {
            "kind": kind or "dense",
            "dim": op.dim,
            "norm_cap": op.norm_cap,
            "entries": np.column_stack((flat.real, flat.imag)).tolist(),
            "provenance": meta,
        }
    raise ValidationError(f"cannot serialize {type(op).__name__}")


def from_json(doc: dict):
    kind = doc.get("kind")
    prov = {k: v for k, v in doc.get("provenance", {}).items() if v is not None}
    prov["kind"] = kind
    if kind in ("free", "anderson", "jacobi", "barriers"):
        v = np.asarray(doc["potential"], dtype=float)
        if v.size != 2 * int(doc["half_width"]) + 1:
            raise ValidationError("potential length disagrees with half_width")
        return JacobiOperator(v, float(doc["bound"]), provenance=prov)
    if kind == "continuum":
        return ContinuumSchrodinger(float(doc["half_width"]), float(doc["spacing"]),
                                    np.asarray(doc["potential"], dtype=float), float(doc["cap"]), prov)
    if kind == "dense":
        pairs = np.asarray(doc["entries"], dtype=float)
        dim = int(doc["dim"])
        entries = (pairs[:, 0] + 1j * pairs[:, 1]).reshape(dim, dim)
        return DenseHermitian(entries, float(doc["norm_cap"]), prov)
    raise ValidationError(f"unknown operator kind {kind!r}")


def save_operator(op, path) -> None:
    Path(path).write_text(json.dumps(to_json(op), sort_keys=True))


def load_operator(path):
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read operator file {path}: {exc}") from exc
    return from_json(doc)
