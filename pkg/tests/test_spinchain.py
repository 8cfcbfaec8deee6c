import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.linalg import expm

from gqmi.coherence import density_from_ensemble
from gqmi.estimators import PartitionSpec
from gqmi.spinchain import (ChainConfig, build_hamiltonian, evolve, mi_time_series,
                            partial_trace_qubit, product_state, projected_ensemble)

X = np.array([[0, 1], [1, 0]])
Z = np.diag([1, -1])


def _op(single, site, L):
    out = np.ones((1, 1))
    for i in range(L):
        out = np.kron(out, single if i == site else np.eye(2))
    return out


def _dense_reference(cfg):
    L = cfg.L
    H = np.zeros((2**L, 2**L))
    for i in range(L):
        for j in range(i):
            H -= abs(cfg.J) / abs(i - j) ** cfg.alpha * _op(Z, i, L) @ _op(Z, j, L)
        H -= cfg.h * _op(X, i, L)
    return H


@pytest.mark.parametrize("L,h", [(3, -0.6), (4, 1.3), (5, 0.0)])
def test_hamiltonian_matches_kron_construction(L, h):
    cfg = ChainConfig(L=L, h=h, site=0)
    assert np.allclose(build_hamiltonian(cfg).toarray(), _dense_reference(cfg), atol=1e-13)


def test_site_zero_is_most_significant_bit():
    psi = product_state("100", 3)
    assert psi[0b100] == 1.0
    rho = partial_trace_qubit(psi, 0, 3)
    assert rho[1, 1] == pytest.approx(1.0)


def test_named_product_states():
    assert np.allclose(product_state("plus", 2), np.full(4, 0.5))
    assert product_state("neel", 4)[0b0101] == 1.0
    with pytest.raises(ValueError):
        product_state("0x", 2)


def test_krylov_matches_dense_expm(rng):
    cfg = ChainConfig(L=5, site=0)
    H = build_hamiltonian(cfg)
    v = rng.normal(size=32) + 1j * rng.normal(size=32)
    v /= np.linalg.norm(v)
    for t in (0.0, 0.3, 4.0, 11.0):
        assert np.max(np.abs(evolve(v, H, t) - expm(-1j * t * H.toarray()) @ v)) < 1e-8


def test_eigenvector_evolves_by_phase_only():
    cfg = ChainConfig(L=3, h=0.0, site=0)
    H = build_hamiltonian(cfg)
    psi = product_state("010", 3)
    info = {}
    out = evolve(psi, H, 2.5, info=info)
    e = H.diagonal()[0b010]
    assert np.allclose(out, np.exp(-2.5j * e) * psi, atol=1e-14)
    assert info["max_error_estimate"] == 0.0


def test_evolve_rejects_unnormalised_input():
    H = build_hamiltonian(ChainConfig(L=2, site=0))
    with pytest.raises(ValueError):
        evolve(np.ones(4), H, 1.0)


@given(st.integers(2, 6), st.data())
def test_projected_ensemble_average_is_reduced_state(L, data):
    site = data.draw(st.integers(0, L - 1))
    seed = data.draw(st.integers(0, 2**31))
    rng = np.random.default_rng(seed)
    psi = rng.normal(size=2**L) + 1j * rng.normal(size=2**L)
    psi /= np.linalg.norm(psi)
    rho = density_from_ensemble(projected_ensemble(psi, site, L)).data
    assert np.max(np.abs(rho - partial_trace_qubit(psi, site, L))) < 1e-10


def test_projected_ensemble_drops_tiny_outcomes():
    psi = product_state("0+0", 3)
    e = projected_ensemble(psi, 1, 3)
    assert e.n == 1
    assert e.diagnostics["drop_mass"] == 0.0
    assert e.p[0, 1] == pytest.approx(0.5)
    assert not e.sampled


def test_config_validation():
    with pytest.raises(ValueError):
        ChainConfig(L=17)
    with pytest.raises(ValueError):
        ChainConfig(L=4, site=4)
    assert len(ChainConfig(t_max=1.0, dt=0.1).times) == 11


def test_short_time_series_starts_at_zero():
    cfg = ChainConfig(L=8, site=3, initial="plus", t_max=0.4, dt=0.2)
    rows = mi_time_series(cfg, PartitionSpec())
    assert [r.t for r in rows] == pytest.approx([0.0, 0.2, 0.4])
    assert rows[0].I == 0.0 and rows[0].n_points == 128
    assert all(r.norm_drift < 1e-8 and r.energy_drift < 1e-6 for r in rows)
    assert all(math.isfinite(r.I_fixed) and r.I_fixed >= 0 for r in rows)
