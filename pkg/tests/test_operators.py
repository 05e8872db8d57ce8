from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import random_hermitian
from intermittency_lab.errors import ValidationError
from intermittency_lab.operators import (
    AndersonSpec,
    ContinuumSchrodinger,
    DenseHermitian,
    DiscreteDisorder,
    JacobiOperator,
    build_free_laplacian,
    build_vk_operator,
    continuum_grid,
    disorder_from_dict,
    from_json,
    load_operator,
    metric_xa,
    metric_xb,
    metric_xc,
    operator_hash,
    sample_anderson,
    save_operator,
    sparse_barrier_potential,
    to_json,
    truncate,
    vk_potential,
)


def test_free_laplacian_matrix():
    m = build_free_laplacian(2).matrix()
    expected = np.diag(np.ones(4), 1) + np.diag(np.ones(4), -1)
    assert np.array_equal(m, expected)


def test_free_laplacian_spectrum_is_dirichlet_cosines():
    n = 20
    lam = np.linalg.eigvalsh(build_free_laplacian(n).matrix())
    k = np.arange(1, 2 * n + 2)
    exact = np.sort(2 * np.cos(np.pi * k / (2 * n + 2)))
    assert np.allclose(lam, exact, atol=1e-12)


def test_jacobi_rejects_potential_above_bound():
    with pytest.raises(ValidationError):
        JacobiOperator(np.array([0.0, 3.0, 0.0]), bound=2.0)


def test_dense_rejects_non_hermitian_and_norm():
    with pytest.raises(ValidationError):
        DenseHermitian(np.array([[0, 1], [0, 0]]), 2.0)
    with pytest.raises(ValidationError):
        DenseHermitian(np.eye(2) * 3, 2.0)


def test_anderson_determinism_and_nesting():
    spec = AndersonSpec(50, 2.0, seed=7)
    a = sample_anderson(spec)
    b = sample_anderson(spec)
    assert np.array_equal(a.potential, b.potential)
    big = sample_anderson(AndersonSpec(200, 2.0, seed=7))
    assert np.array_equal(big.potential[150:251], a.potential)
    other = sample_anderson(spec, realization=1)
    assert not np.array_equal(other.potential, a.potential)
    assert np.max(np.abs(a.potential)) <= 2.0


def test_bernoulli_disorder_values():
    d = disorder_from_dict({"kind": "bernoulli", "bound": 1.5})
    op = sample_anderson(AndersonSpec(100, 1.5, d, seed=1))
    assert set(np.unique(op.potential)) == {-1.5, 1.5}


def test_discrete_disorder_support_checked():
    with pytest.raises(ValidationError):
        AndersonSpec(10, 1.0, DiscreteDisorder((2.0,), (1.0,)))


def test_sparse_barriers_positions():
    v = sparse_barrier_potential(10, 2.5)
    sites = np.arange(-10, 11)
    assert set(sites[v > 0]) == {-8, -4, -2, -1, 1, 2, 4, 8}


def test_vk_potential_formula():
    x = continuum_grid(5.0, 0.5)
    v = np.full_like(x, 0.4)
    out = vk_potential(v, 1.0, 2, x)
    inside = np.abs(x) < 2
    expected = (2 / 3) * np.where(inside, 0.4, 0.0) - 1.0 / (3 * (np.abs(x) + 1))
    assert np.allclose(out, expected)
    assert np.max(np.abs(out)) <= 1.0 + 1e-12


def test_vk_rejects_oversized_input():
    x = continuum_grid(5.0, 0.5)
    with pytest.raises(ValidationError):
        vk_potential(np.full_like(x, 2.0), 1.0, 1, x)


def test_continuum_grid_requires_integer_panels():
    with pytest.raises(ValidationError):
        continuum_grid(1.0, 0.3)


def test_truncate_keeps_center_and_records():
    op = sample_anderson(AndersonSpec(30, 1.0, seed=2))
    t = truncate(op, 10)
    assert np.array_equal(t.potential, op.potential[20:41])
    assert t.provenance["truncation"] == {"from": 30, "to": 10}
    with pytest.raises(ValidationError):
        truncate(op, 31)


def test_truncate_continuum():
    op = build_vk_operator(10.0, 0.5, 1.0, 1)
    t = truncate(op, 5.0)
    assert t.dim == 19
    assert np.allclose(t.potential, op.potential[10:29])


@given(st.integers(1, 20), st.integers(0, 2**32 - 1))
def test_json_round_trip_jacobi(n, seed):
    op = sample_anderson(AndersonSpec(n, 2.0, seed=seed))
    back = from_json(json.loads(json.dumps(to_json(op))))
    assert np.array_equal(back.potential, op.potential)
    assert operator_hash(back) == operator_hash(op)


def test_json_round_trip_dense_and_continuum(tmp_path, rng):
    d = DenseHermitian(random_hermitian(rng, 5), 1.0)
    save_operator(d, tmp_path / "d.json")
    assert np.array_equal(load_operator(tmp_path / "d.json").entries, d.entries)
    c = build_vk_operator(4.0, 0.5, 1.0, 1)
    save_operator(c, tmp_path / "c.json")
    back = load_operator(tmp_path / "c.json")
    assert isinstance(back, ContinuumSchrodinger)
    assert np.array_equal(back.potential, c.potential)


def test_load_rejects_garbage(tmp_path):
    p = tmp_path / "x.json"
    p.write_text("{not json")
    with pytest.raises(ValidationError):
        load_operator(p)
    p.write_text(json.dumps({"kind": "mystery"}))
    with pytest.raises(ValidationError):
        load_operator(p)


# metrics


@given(st.integers(1, 12), st.integers(0, 1000))
def test_metric_xa_axioms(dim, seed):
    r = np.random.default_rng(seed)
    a, b, c = (DenseHermitian(random_hermitian(r, dim), 1.0) for _ in range(3))
    dab = metric_xa(a, b).value
    assert metric_xa(a, a).value == 0.0
    assert dab == pytest.approx(metric_xa(b, a).value)
    assert dab <= metric_xa(a, c).value + metric_xa(c, b).value + 1e-12


def test_metric_xa_tail():
    r = np.random.default_rng(0)
    a, b = (DenseHermitian(random_hermitian(r, 16), 1.0) for _ in range(2))
    full = metric_xa(a, b).value
    part = metric_xa(a, b, basis_order=6)
    assert 0 <= full - part.value <= part.tail_bound


@given(st.lists(st.floats(-3, 3), min_size=5, max_size=5),
       st.lists(st.floats(-3, 3), min_size=5, max_size=5))
def test_metric_xb_symmetric_bounded(v, u):
    d = metric_xb(v, u)
    assert d.value == pytest.approx(metric_xb(u, v).value)
    assert 0 <= d.value <= 3.0


def test_metric_xb_pointwise_convergence():
    base = np.zeros(41)
    # perturbations escaping to infinity drive the distance to zero
    vals = []
    for k in (2, 5, 10, 20):
        v = base.copy()
        v[20 + k] = 1.0
        vals.append(metric_xb(v, base).value)
    assert np.all(np.diff(vals) < 0)
    assert vals[-1] < 1e-5


def test_metric_xc_ball_and_coverage():
    x = continuum_grid(10.0, 0.1)
    v = np.zeros_like(x)
    u = np.where(np.abs(x) > 5, 0.5, 0.0)
    # differences outside B(0,5) only show up for j >= 6
    d = metric_xc(v, u, x, 5)
    assert d.value == 0.0
    assert metric_xc(v, u, x, 8).value > 0
    with pytest.raises(ValidationError):
        metric_xc(v, u, x, 12)
