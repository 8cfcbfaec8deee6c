"""Density matrices of ensembles, relative entropy of coherence and the coherence surplus."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .ensembles import Ensemble
from .estimators import (PartitionSpec, _jsonable, kl_phase_to_uniform, mutual_information,
                         scale_table)

HERM_TOL = 1e-10
PSD_TOL = 1e-10
TRACE_TOL = 1e-10
REJECT_TOL = 1e-8
EIG_FLOOR = 1e-12
SURPLUS_SLACK = 0.03


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Hermitian, positive semidefinite, unit-trace D x D matrix (validated on construction)."""

    data: np.ndarray

    def __post_init__(self):
        a = np.array(self.data, dtype=complex)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"density matrix must be square, got shape {a.shape}")
        if np.max(np.abs(a - a.conj().T)) > HERM_TOL:
            raise ValueError("density matrix is not Hermitian")
        if abs(np.trace(a).real - 1.0) > TRACE_TOL:
            raise ValueError(f"trace is {np.trace(a).real!r}, not 1")
        lam = np.linalg.eigvalsh(a)
        if lam.min() < -PSD_TOL:
            raise ValueError(f"negative eigenvalue {lam.min():.3g}")
        a.setflags(write=False)
        object.__setattr__(self, "data", a)

    @property
    def dim(self) -> int:
        return self.data.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self.data if dtype is None else self.data.astype(dtype)


def _mat(rho) -> np.ndarray:
    return rho.data if isinstance(rho, DensityMatrix) else np.asarray(rho, dtype=complex)


def density_from_ensemble(e: Ensemble, chunk: int = 1 << 16) -> DensityMatrix:
    """sum_i w_i |psi_i><psi_i|, accumulated in chunks."""
    rho = np.zeros((e.dim, e.dim), dtype=complex)
    for lo in range(0, e.n, chunk):
        a = e.amplitudes(lo, lo + chunk)
        rho += (a * e.w[lo:lo + chunk, None]).T @ a.conj()
    rho = 0.5 * (rho + rho.conj().T)
    return DensityMatrix(rho / np.trace(rho).real)


def dephase(rho) -> DensityMatrix:
    return DensityMatrix(np.diag(np.diag(_mat(rho)).real).astype(complex))


def von_neumann_entropy(rho) -> float:
    """-sum lambda ln lambda, eigenvalues <= 1e-12 contributing 0; rejects lambda < -1e-8."""
    a = _mat(rho)
    if np.max(np.abs(a - a.conj().T)) > HERM_TOL:
        raise ValueError("matrix is not Hermitian")
    lam = np.linalg.eigvalsh(a)
    if lam.min() < -REJECT_TOL:
        raise ValueError(f"eigenvalue {lam.min():.3g} below -1e-8: not a valid state")
    lam = lam[lam > EIG_FLOOR]
    return float(-np.sum(lam * np.log(lam)))


def rel_entropy_coherence(rho) -> float:
    """C(rho) = S(diag part of rho) - S(rho), clamped to 0 when within -1e-10."""
    a = _mat(rho)
    c = von_neumann_entropy(np.diag(np.diag(a).real)) - von_neumann_entropy(a)
    if -1e-10 <= c < 0:
        c = 0.0
    return float(c)


def product_marginal_density(e: Ensemble) -> DensityMatrix:
    """Average state of the dephased ensemble, where P and Phi are made independent.

    For the empirical product measure the entries factorise exactly:
    sigma_ab = E_P[sqrt(p_a p_b)] * E_Phi[exp(i(phi_a - phi_b))], which averages
    over all n^2 pairings rather than one random permutation.
    """
    if len(e.blocks) != 1:
        raise ValueError("product marginal supports single-system ensembles only")
    A = np.sqrt(e.p)
    ph = np.exp(1j * e.phi)
    rho = np.einsum("i,ia,ib->ab", e.w, A, A) * np.einsum("i,ia,ib->ab", e.w, ph, ph.conj())
    return DensityMatrix(0.5 * (rho + rho.conj().T))


@dataclass
class SurplusReport:
    I: float
    KL_phi: float
    C: float
    delta_C: float
    holds: bool
    per_scale: list = field(default_factory=list)
    singular: bool = False
    warnings: list = field(default_factory=list)

    def to_dict(self):
        return _jsonable(asdict(self))


@dataclass
class GapReport:
    lhs: float
    rhs: float
    holds: bool
    per_scale: list = field(default_factory=list)

    def to_dict(self):
        return _jsonable(asdict(self))


def coherence_surplus(e: Ensemble, spec: PartitionSpec | None = None, table=None,
                      rho=None) -> SurplusReport:
    """delta_C = I(P;Phi) + KL(mu_Phi || uniform) - C(rho), fitted and per scale.

    Per-scale values use I_eps and KL(eps) from the same cells.  The KL term
    diverges for atomic phase marginals, so ``singular`` is set when its fitted
    slope exceeds 0.1 and the per-scale sequence is then the meaningful output.
    """
    spec = spec or PartitionSpec()
    table = table or scale_table(e, spec)
    mi = mutual_information(e, spec, table=table)
    kl = kl_phase_to_uniform(e, spec, table=table)
    C = rel_entropy_coherence(rho if rho is not None else density_from_ensemble(e))
    per = []
    ok = True
    for i, eps in enumerate(table.scales):
        if not table.included[i]:
            continue
        d = mi.I_eps[i] + kl.values[i] - C
        per.append({"eps": eps, "I": mi.I_eps[i], "KL_phi": kl.values[i], "delta_C": d,
                    "holds": d >= -SURPLUS_SLACK})
        ok = ok and d >= -SURPLUS_SLACK
    I = mi.I
    delta = I + kl.intercept - C if math.isfinite(I) else float("nan")
    singular = kl.slope > 0.1
    if not singular and math.isfinite(delta):
        ok = ok and delta >= -SURPLUS_SLACK
    return SurplusReport(I, kl.intercept, C, delta, bool(ok), per, singular, list(mi.warnings))


def entropy_gap_check(e: Ensemble, spec: PartitionSpec | None = None, table=None,
                      rho=None) -> GapReport:
    """Per-scale check of H(P, uniform Phi) - S(Delta rho) >= H(P, Phi) - S(rho).

    Both sides use the same cells, so the uniform-phase entropy is ln(N_phi cells)
    and the -ln eps terms cancel in the comparison.  ``lhs`` and ``rhs`` are
    reported at the finest included scale; ``holds`` requires every included
    scale to satisfy lhs >= rhs - 0.03.
    """
    spec = spec or PartitionSpec()
    table = table or scale_table(e, spec)
    rho = _mat(rho if rho is not None else density_from_ensemble(e))
    s_rho = von_neumann_entropy(rho)
    s_deph = von_neumann_entropy(np.diag(np.diag(rho).real))
    hp = table.corrected("p")
    hj = table.corrected("joint")
    per = []
    for i, eps in enumerate(table.scales):
        if not table.included[i]:
            continue
        lhs = hp[i] + table.log_n_phi[i] - s_deph
        rhs = hj[i] - s_rho
        per.append({"eps": eps, "lhs": float(lhs), "rhs": float(rhs),
                    "holds": bool(lhs >= rhs - SURPLUS_SLACK)})
    if not per:
        return GapReport(float("nan"), float("nan"), False, per)
    last = per[-1]
    return GapReport(last["lhs"], last["rhs"], all(r["holds"] for r in per), per)
