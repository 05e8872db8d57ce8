"""Acceptance criteria at their stated tolerances.

Each test records a single ``criterion N: PASS|FAIL ...`` line that is
printed in the terminal summary, then asserts.
"""

from __future__ import annotations

import json
import time

import numpy as np
import pytest
from scipy import special

from conftest import ACCEPTANCE_LINES, random_hermitian
from intermittency_lab.evolve import (
    StateVector,
    certify_times,
    eigen_state,
    eigendecompose,
    evolve_many,
    site_state,
)
from intermittency_lab.experiments import run_experiment
from intermittency_lab.exponents import (
    FREE_BAND_LOG_OFFSET,
    WINDOW_SETTINGS,
    beta_from_series,
    d2_estimate,
    d2_from_series,
    slope_envelope,
)
from intermittency_lab.observables import (
    TimeAverageSeries,
    expectation_series,
    log_time_grid,
    moment_q,
    random_positive,
    return_probability_series,
    site_projector,
    time_average_closed,
    time_average_quadrature,
)
from intermittency_lab.operators import (
    AndersonSpec,
    DenseHermitian,
    build_free_laplacian,
    sample_anderson,
)


def record(tag: str, ok: bool, detail: str) -> None:
    line = f"criterion {tag}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


# 1 ---------------------------------------------------------------------------


def test_criterion_01_bessel_fidelity():
    start = time.perf_counter()
    es = eigendecompose(build_free_laplacian(2048))
    e0 = site_state(es.sites, 0)
    t = np.linspace(0.0, 100.0, 4001)
    amp = np.concatenate([evolve_many(es, e0, chunk)[:, 2048] for chunk in np.array_split(t, 40)])
    err = float(np.max(np.abs(amp - special.j0(2 * t))))
    wall = time.perf_counter() - start
    ok = err < 1e-6 and wall < 120
    record("1", ok, f"max|<e0,e^(-itH)e0> - J0(2t)| = {err:.2e} (< 1e-6), runtime {wall:.1f}s (< 120s)")
    assert ok


# 2 ---------------------------------------------------------------------------


def test_criterion_02_closed_vs_quadrature():
    rng = np.random.default_rng(20240601)
    worst = 0.0
    for _ in range(100):
        dim = int(rng.integers(2, 65))
        es = eigendecompose(DenseHermitian(random_hermitian(rng, dim), 1.0))
        x = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
        xi = StateVector(x / np.linalg.norm(x))
        a = random_positive(dim, int(rng.integers(1, min(dim, 5) + 1)), rng)
        t = float(rng.uniform(0.5, 20.0))
        closed = time_average_closed(a, es, xi, t)
        quad = time_average_quadrature(a, es, xi, t, n_points=4096).value
        worst = max(worst, abs(closed - quad))
    ok = worst < 1e-8
    record("2", ok, f"max |closed - quadrature| over 100 instances (dim <= 64) = {worst:.2e} (< 1e-8)")
    assert ok


# 3 ---------------------------------------------------------------------------


def test_criterion_03_free_band_d2():
    es = eigendecompose(build_free_laplacian(1024))
    e0 = site_state(es.sites, 0)
    grid = log_time_grid(10.0, 400.0, 32)
    kept, _ = certify_times(es, e0, grid)
    assert kept.size == grid.size
    parts, ok = [], True
    for w in WINDOW_SETTINGS:
        corr = d2_estimate(es, e0, grid, w, FREE_BAND_LOG_OFFSET)
        raw = d2_estimate(es, e0, grid, w)
        good = 0.85 <= corr.lower and corr.upper <= 1.05
        ok &= good
        parts.append(f"w={w}: corrected [{corr.lower:.3f}, {corr.upper:.3f}] (uncorrected [{raw.lower:.3f}, {raw.upper:.3f}])")
    record("3", ok, "; ".join(parts) + " within [0.85, 1.05]")
    assert ok


# 4 ---------------------------------------------------------------------------


def test_criterion_04_anderson_localization():
    n, b, seeds = 1024, 2.0, range(10)
    grid = log_time_grid(10.0, 1000.0, 32)
    ret, mom, eig_min, certified = [], [], [], True
    for s in seeds:
        es = eigendecompose(sample_anderson(AndersonSpec(n, b, seed=s)))
        e0 = site_state(es.sites, 0)
        kept, _ = certify_times(es, e0, grid)
        certified &= kept.size == grid.size
        ret.append(return_probability_series(es, e0, grid).values)
        mom.append(moment_q(es, e0, grid, 2.0).values)
        k = int(np.argmax(np.abs(es.eigenvectors[n]) ** 2))
        eig_min.append(expectation_series(site_projector(es.sites, 0), es, eigen_state(es, k), grid).values.min())
    c_mean = TimeAverageSeries(grid, np.mean(ret, axis=0), "return_prob")
    m_mean = TimeAverageSeries(grid, np.mean(mom, axis=0), "moment_2")
    d2 = d2_from_series(c_mean, 1.0)
    beta = beta_from_series(m_mean, 2.0, 1.0)
    beta_at_end = float(beta.window_slopes[-1, 1])
    floor = float(min(eig_min))
    ok = (certified and d2.upper < 0.1 and d2.lower < 0.1 and beta_at_end < 0.15
          and floor >= 0.1 and c_mean.values.min() >= 0.1)
    record("4", ok, (f"10 seeds, ensemble D2 proxies [{d2.lower:.3f}, {d2.upper:.3f}] (< 0.1), "
                     f"beta(2) over [1e2, 1e3] = {beta_at_end:.3f} (< 0.15), "
                     f"min eigenvector return avg = {floor:.3f}, min ensemble C = {c_mean.values.min():.3f} (>= 0.1)"))
    assert ok


# 5 ---------------------------------------------------------------------------


@pytest.mark.parametrize("tag,dist", [("5a", {"kind": "uniform"}),
                                      ("5b", {"kind": "bernoulli", "bound": 2.0})],
                         ids=["uniform", "bernoulli"])
def test_criterion_05_spectrum_identity(tag, dist):
    rec = run_experiment("anderson_spectrum", {"distribution": dist}, seed=0)
    ev = rec.evidence
    ok = rec.verdict == "pass"
    record(tag, ok, (f"{dist['kind']} b=2, N=1024, 50 samples: inclusion {ev['inclusion_ok']}, "
                     f"pooled [{ev['pooled_min']:.3f}, {ev['pooled_max']:.3f}] vs [-4, 4], "
                     f"edge gaps {ev['edge_gap_low']:.3f}/{ev['edge_gap_high']:.3f} (<= 0.3)"))
    assert ev["inclusion_ok"]
    assert ok


# 6 ---------------------------------------------------------------------------


def test_criterion_06_last_bound():
    rec = run_experiment("last_bound", seed=0)
    worst = max(c["ratio"] for c in rec.outputs["checks"].values())
    ok = rec.verdict == "pass"
    record("6", ok, f"free N=512, l_min=0.01: worst C_emp / C_Lip = {worst:.3f} (<= 50) for {sorted(rec.outputs['checks'])}")
    assert ok


# 7 ---------------------------------------------------------------------------


def test_criterion_07_eigenweight():
    errs = []
    for seed in range(5):
        rec = run_experiment("eigenweight", seed=seed)
        assert rec.evidence["simple_eigenvalue"]
        errs.append(rec.evidence["max_weight_error"])
    ok = max(errs) <= 1e-10
    record("7", ok, f"max |mu({{lam}}) - 1/k^2| over k=1..10, 5 seeds = {max(errs):.2e} (<= 1e-10)")
    assert ok


# 8 ---------------------------------------------------------------------------


def test_criterion_08_vk_bound_state():
    rec = run_experiment("vk_bound_state", seed=0)
    ev = rec.evidence
    ok = rec.verdict == "pass"
    record("8", ok, (f"E0 = {ev['ground_energy']:.5f} (< -1e-6), h/2: {ev['ground_energy_fine']:.5f}, "
                     f"2L: {ev['ground_energy_wide']:.5f}, relative change {ev['relative_change']:.1e} (<= 0.2)"))
    assert ok


# 9 ---------------------------------------------------------------------------


def test_criterion_09_sr_sd():
    parts, ok = [], True
    for fam in ("free", "anderson"):
        rec = run_experiment("sr_sd", {"family": fam}, seed=0)
        ev = rec.evidence
        ok &= rec.verdict == "pass"
        parts.append(f"{fam}: resolvent {ev['resolvent_first']:.2e} -> {ev['resolvent_last']:.2e}, "
                     f"dynamical {ev['dynamical_first']:.2e} -> {ev['dynamical_last']:.2e}")
    record("9", ok, "; ".join(parts) + " (each >= 4x)")
    assert ok


# 10 --------------------------------------------------------------------------


def _alternating(t, slopes=(-0.2, -0.8), period=2.0):
    lt = np.log10(t)
    seg = np.floor(lt / period).astype(int)
    logv = np.zeros_like(lt)
    level = 0.0
    for k in range(seg.max() + 1):
        mask = seg == k
        logv[mask] = level + slopes[k % 2] * (lt[mask] - k * period)
        level += slopes[k % 2] * period
    return TimeAverageSeries(t, 10**logv, "synthetic")


def test_criterion_10_estimator_soundness():
    s = _alternating(log_time_grid(1.0, 1e8, 32))
    parts, ok = [], True
    for w in WINDOW_SETTINGS:
        est = slope_envelope(s, w)
        good = abs(est.lower + 0.8) <= 0.05 and abs(est.upper + 0.2) <= 0.05
        ok &= good
        parts.append(f"w={w}: [{est.lower:.3f}, {est.upper:.3f}]")
    record("10", ok, "alternating -0.2/-0.8: " + "; ".join(parts) + " (targets within 0.05)")
    assert ok


# 11 --------------------------------------------------------------------------


REPRO = {
    "rage_dichotomy": {"half_width": 256, "t_final": 100.0},
    "intermittency": {"half_width": 512, "control_half_width": 256},
    "anderson_spectrum": {"half_width": 256, "ensemble_size": 20},
    "vk_bound_state": {},
    "eigenweight": {},
    "last_bound": {"half_width": 256},
    "sr_sd": {},
}


def test_criterion_11_reproducibility(tmp_path):
    same = []
    for name, cfg in REPRO.items():
        files = []
        for sub in ("a", "b"):
            path = run_experiment(name, cfg, seed=11).save(tmp_path / sub)
            files.append(sorted(path.parent.iterdir()))
        a, b = files
        ok = [p.name for p in a] == [p.name for p in b]
        for pa, pb in zip(a, b):
            if pa.suffix == ".json":
                da, db = json.loads(pa.read_text()), json.loads(pb.read_text())
                da.pop("wall_time"), db.pop("wall_time")
                ok &= json.dumps(da, sort_keys=True) == json.dumps(db, sort_keys=True)
                # the only differing line is the timestamp
                diff = [x for x, y in zip(pa.read_text().splitlines(), pb.read_text().splitlines()) if x != y]
                ok &= all('"wall_time"' in line for line in diff)
            else:
                ok &= pa.read_bytes() == pb.read_bytes()
        same.append((name, ok))
    ok = all(v for _, v in same)
    record("11", ok, "byte-identical re-runs (timestamp excluded): " + ", ".join(f"{n}={'yes' if v else 'NO'}" for n, v in same))
    assert ok
