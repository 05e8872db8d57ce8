"""Pure numpy fallback for the compiled kernels (same call signatures)."""

from __future__ import annotations

import numpy as np

_BLOCK = 256


def _mean_phase(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    small = np.abs(x) < 1e-12
    xs = np.where(small, 1.0, x)
    re = np.where(small, 1.0, np.sin(xs) / xs)
    im = np.where(small, 0.5 * x, 2.0 * np.sin(0.5 * xs) ** 2 / xs)
    return re, im


def phase_average_quadform(lam, g, times) -> np.ndarray:
    lam = np.asarray(lam, dtype=float)
    g = np.asarray(g)
    times = np.asarray(times, dtype=float)
    m = np.conj(g)[:, None] * g[None, :] if np.iscomplexobj(g) else np.outer(g, g)
    return phase_average_matrix(lam, m, times)


def phase_average_matrix(lam, m, times) -> np.ndarray:
    lam = np.asarray(lam, dtype=float)
    m = np.asarray(m)
    times = np.asarray(times, dtype=float)
    n = lam.shape[0]
    diag = float(np.real(np.trace(m)))
    out = np.empty(times.shape[0])
    iu_rows = np.arange(n)
    for a, t in enumerate(times):
        acc = 0.0
        for start in range(0, n, _BLOCK):
            rows = slice(start, min(start + _BLOCK, n))
            x = t * (lam[rows, None] - lam[None, :])
            upper = iu_rows[None, :] > iu_rows[rows, None]
            re, im = _mean_phase(x)
            blk = m[rows]
            val = blk.real * re
            if np.iscomplexobj(blk):
                val = val - blk.imag * im
            acc += float(np.sum(val, where=upper))
        out[a] = diag + 2.0 * acc
    return out


def lipschitz_sweep(x, w, l_min: float, l_max: float) -> tuple[float, int, int]:
    x = np.asarray(x, dtype=float)
    cum = np.concatenate(([0.0], np.cumsum(w)))
    n = x.shape[0]
    best, bi, bj = -1.0, 0, 0
    ends = np.searchsorted(x, x + l_max, side="right")
    for i in range(n):
        j = np.arange(i, ends[i])
        ratio = (cum[j + 1] - cum[i]) / np.maximum(x[j] - x[i], l_min)
        k = int(np.argmax(ratio))
        if ratio[k] > best:
            best, bi, bj = float(ratio[k]), i, int(j[k])
    return best, bi, bj
