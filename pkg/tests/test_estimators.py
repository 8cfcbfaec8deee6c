import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gqmi import ensembles as ens
from gqmi.estimators import (InsufficientScalesError, PartitionSpec, coarse_entropy,
                             fit_line, kl_phase_to_uniform, mutual_information, scale_table,
                             scaling_fit)
from gqmi.geometry import StatePoint

TWO_PI = 2 * math.pi


def _cell_centre_ensemble(pairs, eps=0.25):
    """Exact ensemble with one point in the centre of each listed (p-cell, phi-cell)."""
    nf = PartitionSpec.n_phi_bins(eps)
    p1 = np.array([(k + 0.5) * eps for k, _ in pairs])
    f1 = np.array([(j + 0.5) * TWO_PI / nf for _, j in pairs])
    n = len(pairs)
    return ens.Ensemble(np.full(n, 1 / n), np.column_stack([1 - p1, p1]),
                        np.column_stack([np.zeros(n), f1]), sampled=False)


def test_bin_counts():
    assert PartitionSpec.n_p_bins(0.25) == 4
    assert PartitionSpec.n_phi_bins(0.25) == 26
    assert PartitionSpec.n_phi_bins(1.0) == 7
    assert PartitionSpec().scales[0] == 0.5 and PartitionSpec().scales[-1] == 2.0**-10


def test_partition_validation():
    with pytest.raises(ValueError):
        PartitionSpec((0.5, 0.5))
    with pytest.raises(ValueError):
        PartitionSpec((2.0,))
    with pytest.raises(ValueError):
        PartitionSpec(window=2)


def test_full_grid_entropies():
    e = _cell_centre_ensemble([(k, j) for k in range(4) for j in range(26)])
    assert coarse_entropy(e, 0.25, "joint") == pytest.approx(math.log(104), abs=1e-12)
    assert coarse_entropy(e, 0.25, "p") == pytest.approx(math.log(4), abs=1e-12)
    assert coarse_entropy(e, 0.25, "phi") == pytest.approx(math.log(26), abs=1e-12)


def test_diagonal_grid_has_full_mutual_information():
    e = _cell_centre_ensemble([(k, k) for k in range(4)])
    h = {w: coarse_entropy(e, 0.25, w) for w in ("joint", "p", "phi")}
    assert h["p"] + h["phi"] - h["joint"] == pytest.approx(math.log(4), abs=1e-12)


def test_fit_line_exact():
    s, c, r2 = fit_line([0, 1, 2, 3], [1, 3, 5, 7])
    assert (s, c, r2) == (pytest.approx(2), pytest.approx(1), pytest.approx(1))


def test_dirac_dimension_is_exactly_zero():
    r = scaling_fit(ens.sample_dirac(StatePoint.qubit(0.3, 1.0), 100))
    assert r.dimension == 0.0 and r.intercept == 0.0
    mi = mutual_information(ens.sample_dirac(StatePoint.qubit(0.3, 1.0), 100))
    assert mi.I == 0.0


def test_haar_qubit_dimension_two():
    e = ens.sample_haar(2, 200_000, seed=7)
    assert scaling_fit(e).dimension == pytest.approx(2.0, abs=0.1)
    assert scaling_fit(e, which="p").dimension == pytest.approx(1.0, abs=0.05)
    assert abs(mutual_information(e).I) < 0.02
    assert abs(kl_phase_to_uniform(e).intercept) < 0.02


def test_spiral_information_near_log_two():
    mi = mutual_information(ens.sample_spiral(math.pi / 2, 200_000, seed=7))
    assert mi.I == pytest.approx(math.log(2), abs=0.05)
    assert abs(mi.D_I) < 0.05
    assert len(mi.fit_scales) == 3


def test_spiral_curve_limit_is_flagged_divergent():
    mi = mutual_information(ens.sample_spiral(0.0, 50_000, seed=1))
    assert math.isnan(mi.I)
    assert mi.D_I > 0.5
    assert any("diverges" in w for w in mi.warnings)


def test_atomic_phases_have_unit_kl_slope():
    kl = kl_phase_to_uniform(ens.sample_dirac(StatePoint.qubit(0.3, 1.0), 100))
    assert kl.slope == pytest.approx(1.0, abs=0.01)


def test_too_few_samples_raise_in_strict_mode():
    e = ens.sample_haar(2, 300, seed=1)
    with pytest.raises(InsufficientScalesError, match="saturated"):
        mutual_information(e)
    mi = mutual_information(e, strict=False)
    assert len(mi.fit_scales) < 3


def test_miller_madow_only_for_sampled():
    e = ens.sample_haar(2, 5000, seed=1)
    tb = scale_table(e, PartitionSpec((0.25,), None))
    k = tb.occupied["joint"][0]
    assert tb.corrected("joint")[0] - tb.raw["joint"][0] == pytest.approx((k - 1) / (2 * 5000))
    exact = ens.sample_dirac(StatePoint.qubit(0.5), 10)
    tb = scale_table(exact, PartitionSpec((0.25,), None))
    assert tb.corrected("joint")[0] == tb.raw["joint"][0]


def test_report_serialises_nan_as_null():
    mi = mutual_information(ens.sample_spiral(0.0, 20_000, seed=1))
    assert mi.to_dict()["I"] is None


@st.composite
def small_qubit_ensembles(draw):
    n = draw(st.integers(1, 60))
    p1 = np.array(draw(st.lists(st.floats(0, 1), min_size=n, max_size=n)))
    f1 = np.array(draw(st.lists(st.floats(0, 6.28), min_size=n, max_size=n)))
    w = np.array(draw(st.lists(st.floats(0.01, 1), min_size=n, max_size=n)))
    return ens.Ensemble(w / w.sum(), np.column_stack([1 - p1, p1]),
                        np.column_stack([np.zeros(n), f1]))


@given(small_qubit_ensembles(), st.sampled_from([0.5, 0.25, 0.1, 0.01]))
def test_plugin_entropies_obey_shannon_bounds(e, eps):
    hj = coarse_entropy(e, eps, "joint")
    hp = coarse_entropy(e, eps, "p")
    hf = coarse_entropy(e, eps, "phi")
    assert max(hp, hf) <= hj + 1e-12
    assert hj <= hp + hf + 1e-12
    assert hj <= math.log(e.n) + 1e-12


@given(small_qubit_ensembles(), st.randoms())
def test_entropy_invariant_under_point_order(e, rnd):
    perm = list(range(e.n))
    rnd.shuffle(perm)
    f = ens.Ensemble(e.w[perm], e.p[perm], e.phi[perm])
    for eps in (0.5, 0.05):
        assert coarse_entropy(f, eps) == pytest.approx(coarse_entropy(e, eps), abs=1e-12)
