import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, stats

from gqmi import ensembles as ens
from gqmi.geometry import StatePoint, fs_distance

TWO_PI = 2 * math.pi


def test_haar_qubit_marginals_are_uniform():
    e = ens.sample_haar(2, 50_000, seed=1)
    assert stats.kstest(e.p[:, 1], "uniform").pvalue > 1e-3
    counts, _ = np.histogram(e.phi[:, 1], bins=20, range=(0, TWO_PI))
    assert stats.chisquare(counts).pvalue > 1e-3
    assert e.sampled and e.meta["generator"] == "haar"


def test_haar_qutrit_probability_marginal_is_beta_1_2():
    e = ens.sample_haar(3, 50_000, seed=2)
    assert stats.kstest(e.p[:, 2], stats.beta(1, 2).cdf).pvalue > 1e-3
    assert np.allclose(e.p.sum(axis=1), 1.0)


def test_haar_chunking_is_deterministic_across_chunks():
    a = ens.sample_haar(2, (1 << 18) + 10, seed=9)
    b = ens.sample_haar(2, (1 << 18) + 10, seed=9)
    assert np.array_equal(a.p, b.p) and np.array_equal(a.phi, b.phi)


@pytest.mark.parametrize("make", [
    lambda s: ens.sample_spiral(1.0, 2000, s),
    lambda s: ens.sample_diagonal([0.2, 0.8], 2000, s),
    lambda s: ens.sample_naive_gaussian(0.4, 2.0, 0.1, 0.5, 2000, s),
    lambda s: ens.sample_canonical(1.0, 0.5, 2000, s, ens.McmcConfig(burn=500)),
    lambda s: ens.sample_fs_gaussian(None, 0.4, 2000, s, ens.McmcConfig(burn=500)),
])
def test_same_seed_same_ensemble(make):
    a, b, c = make(5), make(5), make(6)
    assert a.same_points(b)
    assert not a.same_points(c)


def test_dirac_is_exact():
    x = StatePoint.qubit(0.3, 1.0)
    e = ens.sample_dirac(x, 7)
    assert not e.sampled
    assert all(pt == x for _, pt in e.points)
    assert e.n_eff == pytest.approx(7)


def test_spiral_structure():
    e = ens.sample_spiral(0.5, 20_000, seed=3)
    off = np.angle(np.exp(1j * (e.phi[:, 1] - TWO_PI * e.p[:, 1])))
    assert np.max(np.abs(off)) <= 0.5 + 1e-12
    assert stats.kstest(e.p[:, 1], "uniform").pvalue > 1e-3
    assert "warning" in ens.sample_spiral(0.0, 10, 1).diagnostics
    with pytest.raises(ValueError):
        ens.sample_spiral(4.0, 10, 1)


def test_naive_gaussian_stays_in_rectangle():
    e = ens.sample_naive_gaussian(0.05, 0.1, 0.3, 2.0, 10_000, seed=4)
    assert e.p[:, 1].min() >= 0 and e.p[:, 1].max() <= 1
    assert e.phi[:, 1].min() >= 0 and e.phi[:, 1].max() < TWO_PI


def _canonical_mean_p(beta, g):
    h = lambda f, p: 1 - 2 * p + 2 * g * math.sqrt(p * (1 - p)) * math.cos(f)
    z = integrate.dblquad(lambda f, p: math.exp(-beta * h(f, p)), 0, 1, 0, TWO_PI)[0]
    m = integrate.dblquad(lambda f, p: p * math.exp(-beta * h(f, p)), 0, 1, 0, TWO_PI)[0]
    return m / z


def test_canonical_mcmc_matches_quadrature():
    e = ens.sample_canonical(2.0, 0.5, 40_000, seed=11)
    want = _canonical_mean_p(2.0, 0.5)
    assert e.p[:, 1].mean() == pytest.approx(want, abs=0.01)
    assert 0.1 <= e.diagnostics["acceptance_rate"] <= 0.9
    assert e.diagnostics["chains"] == 8


def test_fs_gaussian_matches_rejection_sampler():
    sigma = 0.5
    x0 = StatePoint.qubit(0.5, math.pi)
    rng = np.random.default_rng(21)
    keep_p, keep_f = [], []
    while len(keep_p) < 20_000:
        p, f = rng.random(), rng.random() * TWO_PI
        d = fs_distance(StatePoint.qubit(p, f), x0)
        if rng.random() < math.exp(-d * d / (2 * sigma**2)):
            keep_p.append(p)
            keep_f.append(f)
    e = ens.sample_fs_gaussian(x0, sigma, 20_000, seed=22)
    assert stats.ks_2samp(e.p[:, 1], keep_p).pvalue > 1e-3
    assert stats.ks_2samp(e.phi[:, 1], keep_f).pvalue > 1e-3


def test_low_acceptance_records_warning():
    cfg = ens.McmcConfig(sigma_p=0.5, sigma_phi=3.0, burn=100, jump_prob=0.0)
    e = ens.sample_fs_gaussian(None, 0.02, 500, seed=1, cfg=cfg)
    assert "warning" in e.diagnostics


def test_weights_must_sum_to_one():
    with pytest.raises(ValueError):
        ens.Ensemble(np.array([0.5, 0.6]), np.array([[1.0, 0.0]] * 2), np.zeros((2, 2)))


def test_mix_endpoints_and_weights():
    a = ens.sample_spiral(1.0, 100, 1)
    b = ens.sample_haar(2, 300, 2)
    assert ens.mix(a, b, 1.0) is a and ens.mix(a, b, 0.0) is b
    m = ens.mix(a, b, 0.25)
    assert m.n == 400
    assert m.w[:100].sum() == pytest.approx(0.25)
    with pytest.raises(ValueError):
        ens.mix(a, ens.sample_haar(3, 10, 1), 0.5)


def test_tensor_pairs_samples_and_expands_exact():
    a = ens.sample_spiral(1.0, 100, 1)
    b = ens.sample_haar(2, 80, 2)
    t = ens.tensor(a, b)
    assert t.blocks == (2, 2) and t.n == 80 and t.dim == 4
    d1 = ens.sample_dirac(StatePoint.qubit(0.2), 3)
    d2 = ens.sample_dirac(StatePoint.qubit(0.7), 2)
    o = ens.tensor(d1, d2)
    assert o.n == 6 and not o.sampled
    amp = o.amplitudes(0, 1)[0]
    assert abs(np.linalg.norm(amp) - 1) < 1e-12


def test_product_channel_identity_and_bounds():
    e = ens.sample_spiral(1.0, 5000, 1)
    assert ens.product_channel(e, None, None, seed=1) is e
    out = ens.product_channel(e, ens.TruncGaussP(0.2), ens.WrappedUniformPhi(1.0), seed=2)
    assert out.p.min() >= 0 and out.p.max() <= 1
    assert out.diagnostics["p_redraws"] > 0
    assert np.array_equal(out.w, e.w)


def test_jsonl_round_trip_is_bit_exact(tmp_path):
    e = ens.sample_canonical(1.0, 0.5, 300, seed=3, cfg=ens.McmcConfig(burn=200))
    path = tmp_path / "e.jsonl"
    ens.write_jsonl(e, path)
    r = ens.read_jsonl(path)
    assert np.array_equal(r.w, e.w) and np.array_equal(r.p, e.p) and np.array_equal(r.phi, e.phi)
    assert r.meta == e.meta
    meta = json.loads(path.read_text().splitlines()[0])
    assert meta["n"] == 300 and meta["dim"] == 2


def test_jsonl_corrupt_line_reports_line_number(tmp_path):
    e = ens.sample_spiral(1.0, 5, 1)
    path = tmp_path / "e.jsonl"
    ens.write_jsonl(e, path)
    lines = path.read_text().splitlines()
    lines[3] = '{"w": 0.2, "p": [0.5'
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(ens.EnsembleFormatError) as info:
        ens.read_jsonl(path)
    assert info.value.line == 4


@given(st.floats(0.01, 0.99), st.integers(1, 50), st.integers(1, 50))
def test_mixture_weights_always_normalised(lam, n1, n2):
    m = ens.mix(ens.sample_dirac(StatePoint.qubit(0.1), n1),
                ens.sample_dirac(StatePoint.qubit(0.9), n2), lam)
    assert m.w.sum() == pytest.approx(1.0, abs=1e-12)
    assert m.w[:n1].sum() == pytest.approx(lam, abs=1e-12)
