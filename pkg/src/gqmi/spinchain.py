"""Long-range transverse-field Ising chain, Krylov time evolution and projected ensembles.

Basis convention: site i is bit (L - 1 - i) of the basis index, so site 0 is the
most significant bit and ``psi.reshape((2,) * L)`` has axis i for site i.  Bit 0
is spin up (sigma_z = +1).
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.linalg import eigh_tridiagonal

from .ensembles import Ensemble
from .estimators import PartitionSpec, mutual_information, scale_table
from .geometry import amplitudes_to_coords_array

DROP_TOL = 1e-14
NORM_DRIFT_TOL = 1e-8

_SINGLE = {
    "0": (1.0, 0.0), "1": (0.0, 1.0),
    "+": (1 / math.sqrt(2), 1 / math.sqrt(2)), "-": (1 / math.sqrt(2), -1 / math.sqrt(2)),
    "r": (1 / math.sqrt(2), 1j / math.sqrt(2)), "l": (1 / math.sqrt(2), -1j / math.sqrt(2)),
}
_NAMED = {"up": "0", "down": "1", "plus": "+", "minus": "-", "y": "r"}


class KrylovError(RuntimeError):
    pass


@dataclass
class ChainConfig:
    L: int = 14
    J: float = 1.0
    alpha: float = 2.0
    h: float = -0.6
    site: int = 6
    initial: object = "up"
    t_max: float = 20.0
    dt: float = 0.1

    def __post_init__(self):
        if not 2 <= self.L <= 16:
            raise ValueError(f"L must lie in [2, 16], got {self.L}")
        if not 0 <= self.site < self.L:
            raise ValueError(f"site must lie in [0, {self.L - 1}], got {self.site}")
        if self.dt <= 0 or self.t_max < 0:
            raise ValueError("need dt > 0 and t_max >= 0")

    @property
    def times(self) -> np.ndarray:
        steps = int(round(self.t_max / self.dt))
        return np.arange(steps + 1) * self.dt

    def to_dict(self):
        d = asdict(self)
        if not isinstance(self.initial, str):
            d["initial"] = "explicit"
        return d


def product_state(spec: str, L: int) -> np.ndarray:
    """Product state from a name ('up', 'down', 'plus', 'minus', 'y', 'neel') or a
    per-site string over {0, 1, +, -, r, l} of length L."""
    if spec == "neel":
        spec = ("01" * L)[:L]
    elif spec in _NAMED:
        spec = _NAMED[spec] * L
    if len(spec) != L or any(c not in _SINGLE for c in spec):
        raise ValueError(f"bad product-state spec {spec!r} for L={L}")
    psi = np.ones(1, dtype=complex)
    for c in spec:
        psi = np.kron(psi, np.array(_SINGLE[c], dtype=complex))
    return psi


def initial_state(cfg: ChainConfig) -> np.ndarray:
    if isinstance(cfg.initial, str):
        return product_state(cfg.initial, cfg.L)
    psi = np.asarray(cfg.initial, dtype=complex).reshape(-1)
    if psi.size != 2**cfg.L or abs(np.linalg.norm(psi) - 1) > 1e-9:
        raise ValueError("explicit initial state must be a unit vector of length 2^L")
    return psi


def zz_diagonal(cfg: ChainConfig) -> np.ndarray:
    L = cfg.L
    idx = np.arange(2**L)
    z = 1 - 2 * ((idx[:, None] >> (L - 1 - np.arange(L))[None, :]) & 1)
    d = np.zeros(2**L)
    for i in range(L):
        for j in range(i):
            d -= abs(cfg.J) * z[:, i] * z[:, j] / abs(i - j) ** cfg.alpha
    return d


def build_hamiltonian(cfg: ChainConfig) -> sp.csr_matrix:
    """H = -|J| sum_{i>j} Z_i Z_j / |i-j|^alpha - h sum_i X_i, open chain, real symmetric CSR."""
    N = 2**cfg.L
    idx = np.arange(N)
    rows = [idx]
    cols = [idx]
    vals = [zz_diagonal(cfg)]
    if cfg.h != 0:
        for i in range(cfg.L):
            rows.append(idx)
            cols.append(idx ^ (1 << (cfg.L - 1 - i)))
            vals.append(np.full(N, -cfg.h))
    H = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(N, N))
    H.eliminate_zeros()
    return H


def _lanczos(H, v, m_max):
    """Orthonormal Krylov basis with full reorthogonalisation.

    Returns (V, alpha, beta, happy) where beta[k] couples V[k] and V[k+1] and the
    final entry of beta is the residual norm (0 on happy breakdown).
    """
    n = v.size
    V = np.empty((m_max + 1, n), dtype=complex)
    a = np.zeros(m_max)
    b = np.zeros(m_max)
    V[0] = v
    scale = None
    for k in range(m_max):
        w = H @ V[k]
        a[k] = np.vdot(V[k], w).real
        w -= a[k] * V[k]
        if k > 0:
            w -= b[k - 1] * V[k - 1]
        # two passes of Gram-Schmidt keep the basis orthogonal to rounding
        for _ in range(2):
            w -= V[:k + 1].T @ (V[:k + 1].conj() @ w)
        b[k] = np.linalg.norm(w)
        if not np.isfinite(b[k]):
            raise KrylovError(f"non-finite Lanczos coefficient at step {k}")
        if scale is None:
            scale = max(abs(a[0]), b[0], 1.0)
        if b[k] <= 1e-13 * scale:
            return V[:k + 1], a[:k + 1], b[:k + 1], True
        V[k + 1] = w / b[k]
    return V[:m_max], a, b, False


def _tri_expm_first_col(a, b, tau):
    """exp(-i tau T) e_0 for the symmetric tridiagonal T (diag a, off-diag b)."""
    if a.size == 1:
        return np.array([np.exp(-1j * tau * a[0])])
    lam, U = eigh_tridiagonal(a, b[:a.size - 1])
    return U @ (np.exp(-1j * tau * lam) * U[0].conj())


def evolve(psi0, H, t: float, tol: float = 1e-8, m_max: int = 30, info: dict | None = None):
    """psi(t) = exp(-iHt) psi0 by adaptive Lanczos steps.

    Each substep is accepted when the standard a-posteriori estimate
    beta_m * |[exp(-i tau T_m)]_{m-1, 0}| is at most ``tol``; an invariant
    Krylov space (happy breakdown) makes the substep exact.  The norm is
    restored after every substep if it drifted by less than 1e-8; a larger drift
    raises :class:`KrylovError`.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    psi = np.array(psi0, dtype=complex)
    nrm = np.linalg.norm(psi)
    if abs(nrm - 1) > 1e-9:
        raise ValueError(f"initial state has norm {nrm!r}")
    done = 0.0
    tau = t
    substeps = 0
    max_err = 0.0
    while done < t:
        V, a, b, happy = _lanczos(H, psi, m_max)
        tau = min(tau * 2 if substeps else t, t - done)
        while True:
            c = _tri_expm_first_col(a, b, tau)
            err = 0.0 if happy else b[-1] * abs(c[-1])
            if err <= tol:
                break
            tau *= 0.5
            if tau < 1e-12 * max(t, 1.0):
                raise KrylovError(f"step size collapsed at t={done:.6g} (error estimate {err:.3g})")
        new = c @ V
        drift = abs(np.linalg.norm(new) - 1.0)
        if drift > NORM_DRIFT_TOL:
            raise KrylovError(f"norm drift {drift:.3g} at t={done + tau:.6g}")
        psi = new / np.linalg.norm(new)
        done += tau
        substeps += 1
        max_err = max(max_err, err)
    if info is not None:
        info.update(substeps=substeps, max_error_estimate=max_err)
    return psi


def projected_ensemble(psi, system_site: int, L: int | None = None) -> Ensemble:
    """Measure every other site in the z basis and collect the conditional qubit states.

    Outcomes with probability below 1e-14 are dropped and the rest renormalised;
    ``diagnostics`` records the dropped mass and the pre-drop weight sum.
    """
    psi = np.asarray(psi, dtype=complex).reshape(-1)
    if L is None:
        L = int(round(math.log2(psi.size)))
    if 2**L != psi.size:
        raise ValueError("state length is not a power of two")
    if not 0 <= system_site < L:
        raise ValueError("system_site out of range")
    A = np.moveaxis(psi.reshape((2,) * L), system_site, 0).reshape(2, -1)
    w = np.sum(A.real**2 + A.imag**2, axis=0)
    total = float(w.sum())
    keep = w >= DROP_TOL
    dropped = float(w[~keep].sum())
    A = A[:, keep] / np.sqrt(w[keep])
    p, phi = amplitudes_to_coords_array(A.T)
    p = p / p.sum(axis=1, keepdims=True)
    wk = w[keep] / w[keep].sum()
    return Ensemble(wk, p, phi, generator="projected", params={"site": system_site, "L": L},
                    sampled=False,
                    diagnostics={"drop_mass": dropped, "weight_sum": total,
                                 "n_outcomes": int(keep.sum())})


def partial_trace_qubit(psi, site: int, L: int) -> np.ndarray:
    """Reduced density matrix of one site (dense reference implementation)."""
    A = np.moveaxis(np.asarray(psi).reshape((2,) * L), site, 0).reshape(2, -1)
    return A @ A.conj().T


@dataclass
class TimeSeriesRow:
    t: float
    I: float
    D_I: float
    plateau_diag: float
    n_points: int
    drop_mass: float
    I_fixed: float
    n_scales: int
    norm_drift: float
    energy_drift: float
    warnings: list = field(default_factory=list)


def mi_time_series(cfg: ChainConfig, spec: PartitionSpec | None = None,
                   eps_fixed: float = 2.0**-3, progress=None) -> list[TimeSeriesRow]:
    """Evolve, project and estimate I(P;Phi) at every grid time.

    ``I`` follows :func:`mutual_information` in non-strict mode (NaN when no
    scale survives the saturation guard); ``I_fixed`` is I_eps at ``eps_fixed``
    for every time, whatever the guard says.
    """
    spec = spec or PartitionSpec()
    fixed = PartitionSpec((eps_fixed,), window=None)
    H = build_hamiltonian(cfg)
    psi = initial_state(cfg)
    e0 = float(np.vdot(psi, H @ psi).real)
    rows = []
    prev = 0.0
    for t in cfg.times:
        if t > prev:
            psi = evolve(psi, H, t - prev)
            prev = t
        ens = projected_ensemble(psi, cfg.site, cfg.L)
        tb = scale_table(ens, spec)
        mi = mutual_information(ens, spec, table=tb, strict=False)
        ft = scale_table(ens, fixed)
        i_fixed = ft.raw["p"][0] + ft.raw["phi"][0] - ft.raw["joint"][0]
        rows.append(TimeSeriesRow(
            float(t), mi.I, mi.D_I, mi.plateau_diag, ens.n, ens.diagnostics["drop_mass"],
            float(i_fixed), len(mi.fit_scales), abs(float(np.linalg.norm(psi)) - 1.0),
            abs(float(np.vdot(psi, H @ psi).real) - e0), list(mi.warnings)))
        if progress:
            progress(rows[-1])
    return rows
