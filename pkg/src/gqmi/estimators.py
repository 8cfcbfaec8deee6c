"""Coarse-grained entropies, information dimensions and probability-phase mutual information.

Cells have linear size eps.  Each probability coordinate p_1..p_{D-1} is cut
into ceil(1/eps) bins of width eps over [0, 1] (the last one clipped) and each
relative phase phi_1..phi_{D-1} into ceil(2pi/eps) bins of equal width over
[0, 2pi).  Entropies are in nats.

Ensembles flagged ``sampled`` are finite draws from a continuous law.  For them
the per-scale entropies get the Miller-Madow correction (K - 1) / (2 n_eff), with
K the number of occupied cells and n_eff = 1 / sum(w^2), and scales where more
than 1% of the weight sits in singly-occupied joint cells are excluded.  Exact
discrete ensembles (Dirac, projected) are binned as-is.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .ensembles import Ensemble
from .geometry import TWO_PI

WHICH = ("joint", "p", "phi")
SATURATION_MARGIN = 1.0
SINGLETON_LIMIT = 0.01
PLATEAU_SLOPE = 0.05
_BINCOUNT_MAX = 1 << 24


class InsufficientScalesError(ValueError):
    pass


@dataclass(frozen=True)
class PartitionSpec:
    """Strictly decreasing list of cell sizes eps in (0, 1]; default 2^-1 .. 2^-10."""

    scales: tuple = tuple(2.0**-k for k in range(1, 11))
    window: int | None = 3  # fit over the finest `window` included scales; None = all

    def __post_init__(self):
        s = tuple(float(x) for x in self.scales)
        if len(s) == 0:
            raise ValueError("empty scale list")
        if any(not 0.0 < x <= 1.0 for x in s):
            raise ValueError("scales must lie in (0, 1]")
        if any(b >= a for a, b in zip(s, s[1:])):
            raise ValueError("scales must be strictly decreasing")
        if self.window is not None and self.window < 3:
            raise ValueError("fit window must hold at least 3 scales")
        object.__setattr__(self, "scales", s)

    @classmethod
    def dyadic(cls, kmin: int = 1, kmax: int = 10, window: int | None = 3) -> "PartitionSpec":
        return cls(tuple(2.0**-k for k in range(kmin, kmax + 1)), window)

    @staticmethod
    def n_p_bins(eps: float) -> int:
        return max(1, math.ceil(1.0 / eps - 1e-9))

    @staticmethod
    def n_phi_bins(eps: float) -> int:
        return max(1, math.ceil(TWO_PI / eps - 1e-9))


def _binned_coords(e: Ensemble):
    """Free coordinates of every block: p_1..p_{d-1} and phi_1..phi_{d-1}."""
    cols = []
    s = 0
    for d in e.blocks:
        cols.extend(range(s + 1, s + d))
        s += d
    return e.p[:, cols], e.phi[:, cols]


def _combine(idx, radix):
    """Mixed-radix flattening of integer columns; None if it would overflow int64."""
    if radix ** idx.shape[1] >= 2**62:
        return None
    out = np.zeros(idx.shape[0], dtype=np.int64)
    for k in range(idx.shape[1]):
        out = out * radix + idx[:, k]
    return out


def cell_indices(e: Ensemble, eps: float):
    """Per-point cell labels at scale eps: (p-cell, phi-cell, joint-cell, n_phi_cells)."""
    P, F = _binned_coords(e)
    nb = PartitionSpec.n_p_bins(eps)
    nf = PartitionSpec.n_phi_bins(eps)
    ip = np.minimum((P / eps).astype(np.int64), nb - 1)
    iphi = np.minimum((F / (TWO_PI / nf)).astype(np.int64), nf - 1)
    a = P.shape[1]
    jp = _combine(ip, nb)
    jf = _combine(iphi, nf)
    joint = None
    if jp is not None and jf is not None and (nb * nf) ** a < 2**62:
        joint = jp * nf**a + jf
    if jp is None:
        jp = np.unique(ip, axis=0, return_inverse=True)[1].reshape(-1)
    if jf is None:
        jf = np.unique(iphi, axis=0, return_inverse=True)[1].reshape(-1)
    if joint is None:
        joint = np.unique(np.column_stack([ip, iphi]), axis=0, return_inverse=True)[1].reshape(-1)
    return jp, jf, joint, nf**a


def histogram_stats(idx: np.ndarray, w: np.ndarray):
    """Plug-in entropy of accumulated weights, occupied-cell count, singleton weight."""
    if idx.size and idx.min() >= 0 and idx.max() < _BINCOUNT_MAX:
        mass = np.bincount(idx, weights=w)
        cnt = np.bincount(idx)
    else:
        _, inv, cnt = np.unique(idx, return_inverse=True, return_counts=True)
        mass = np.bincount(inv.reshape(-1), weights=w)
    occ = cnt > 0
    m = mass[occ]
    single = float(mass[cnt == 1].sum())
    m = m[m > 0]
    m = m / m.sum()
    h = float(-np.sum(m * np.log(m)))
    return max(h, 0.0), int(occ.sum()), single


def weighted_entropy(idx, w) -> float:
    return histogram_stats(np.asarray(idx), np.asarray(w, dtype=float))[0]


def coarse_entropy(e: Ensemble, eps: float, which: str = "joint") -> float:
    """Plug-in Shannon entropy -sum w_cell ln w_cell of the eps-partition (no correction)."""
    if which not in WHICH:
        raise ValueError(f"which must be one of {WHICH}")
    if not 0.0 < eps <= 1.0:
        raise ValueError("eps must lie in (0, 1]")
    jp, jf, jj, _ = cell_indices(e, eps)
    return histogram_stats({"joint": jj, "p": jp, "phi": jf}[which], e.w)[0]


@dataclass
class ScaleTable:
    """Every per-scale histogram statistic the estimators need, computed once."""

    scales: list
    raw: dict  # which -> list of plug-in entropies
    occupied: dict  # which -> list of occupied-cell counts
    singleton_mass: list
    log_n_phi: list
    included: list
    reasons: list
    sampled: bool
    n_eff: float
    weight_entropy: float

    def corrected(self, which):
        h = np.array(self.raw[which])
        if not self.sampled:
            return h
        return h + (np.array(self.occupied[which]) - 1) / (2.0 * self.n_eff)


def scale_table(e: Ensemble, spec: PartitionSpec | None = None) -> ScaleTable:
    spec = spec or PartitionSpec()
    w = e.w
    hw = float(-np.sum(w[w > 0] * np.log(w[w > 0])))
    raw = {k: [] for k in WHICH}
    occ = {k: [] for k in WHICH}
    singles, lnf, inc, why = [], [], [], []
    for eps in spec.scales:
        jp, jf, jj, nphi = cell_indices(e, eps)
        for key, idx in (("p", jp), ("phi", jf), ("joint", jj)):
            h, k, s1 = histogram_stats(idx, w)
            raw[key].append(h)
            occ[key].append(k)
        singles.append(s1)
        lnf.append(math.log(nphi))
        hj = raw["joint"][-1]
        reason = ""
        if hj > 0.0 and hj > hw - SATURATION_MARGIN:
            reason = "saturated"
        elif hj > 0.0 and e.sampled and s1 > SINGLETON_LIMIT:
            reason = "undersampled"
        inc.append(reason == "")
        why.append(reason)
    return ScaleTable(list(spec.scales), raw, occ, singles, lnf, inc, why, e.sampled,
                      e.n_eff, hw)


def fit_line(x, y):
    """OLS y = slope * x + intercept; returns (slope, intercept, R^2)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    A = np.column_stack([x, np.ones_like(x)])
    (slope, icpt), *_ = np.linalg.lstsq(A, y, rcond=None)
    ss_res = float(np.sum((y - (slope * x + icpt)) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot <= 1e-300 else 1.0 - ss_res / ss_tot
    return float(slope), float(icpt), r2


def fit_scaling(scales, values):
    """Fit values = D * (-ln eps) + H_G; returns (D, H_G, R^2)."""
    return fit_line(-np.log(np.asarray(scales, dtype=float)), values)


def _window(table: ScaleTable, spec: PartitionSpec, min_scales: int, strict: bool):
    idx = [i for i, ok in enumerate(table.included) if ok]
    if spec.window is not None:
        idx = idx[-spec.window:]
    if len(idx) < min_scales and strict:
        detail = ", ".join(f"{s:g}:{r or 'ok'}" for s, r in zip(table.scales, table.reasons))
        raise InsufficientScalesError(
            f"only {len(idx)} usable scales (need {min_scales}); per-scale status {detail}")
    return idx


def _jsonable(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return _jsonable(obj.item())
    return obj


@dataclass
class ScalingReport:
    which: str
    scales: list
    entropies: list
    raw_entropies: list
    included: list
    excluded: list
    fit_scales: list
    dimension: float
    intercept: float
    r2: float

    def to_dict(self):
        return _jsonable(asdict(self))


@dataclass
class MIResult:
    scales: list
    I_eps: list
    included: list
    excluded: list
    fit_scales: list
    D_I: float
    I_fit: float
    I_plateau: float
    I: float
    plateau_diag: float
    warnings: list = field(default_factory=list)

    def to_dict(self):
        return _jsonable(asdict(self))


@dataclass
class KLResult:
    scales: list
    values: list
    fit_scales: list
    slope: float
    intercept: float

    def to_dict(self):
        return _jsonable(asdict(self))


def scaling_fit(e: Ensemble, spec: PartitionSpec | None = None, which: str = "joint",
                table: ScaleTable | None = None, min_scales: int = 3) -> ScalingReport:
    """Regress the coarse entropy on -ln eps over the included scales.

    A scale is excluded when its joint entropy exceeds H(weights) - 1 (ln n - 1
    for equal weights), or, for sampled ensembles, when singleton cells hold
    more than 1% of the weight.  A scale whose joint entropy is exactly zero is
    never excluded.
    """
    if which not in WHICH:
        raise ValueError(f"which must be one of {WHICH}")
    spec = spec or PartitionSpec()
    table = table or scale_table(e, spec)
    idx = _window(table, spec, min_scales, True)
    h = table.corrected(which)
    sc = [table.scales[i] for i in idx]
    D, HG, r2 = fit_scaling(sc, h[idx])
    return ScalingReport(which, table.scales, h.tolist(), table.raw[which], table.included,
                         [s for s, ok in zip(table.scales, table.included) if not ok],
                         sc, D, HG, r2)


def mutual_information(e: Ensemble, spec: PartitionSpec | None = None,
                       table: ScaleTable | None = None, strict: bool = True) -> MIResult:
    """I_eps = H_P + H_Phi - H_joint per scale, with (D_I, I) fitted against -ln eps.

    When |D_I| <= 0.05 the mean of I_eps over the fit window (the plateau) is the
    primary estimate; otherwise the fitted intercept is.  With ``strict=False``
    fewer than three usable scales are tolerated: I is then the mean over the
    usable ones (NaN if none) and D_I is NaN.
    """
    spec = spec or PartitionSpec()
    table = table or scale_table(e, spec)
    idx = _window(table, spec, 3, strict)
    ie = table.corrected("p") + table.corrected("phi") - table.corrected("joint")
    sc = [table.scales[i] for i in idx]
    y = ie[idx]
    warn = []
    excluded = [s for s, ok in zip(table.scales, table.included) if not ok]
    if len(idx) < 3:
        I = float(y.mean()) if len(idx) else float("nan")
        warn.append(f"only {len(idx)} usable scales; no scaling fit")
        diag = float(np.max(np.abs(y - I))) if len(idx) else float("nan")
        return MIResult(table.scales, ie.tolist(), table.included, excluded, sc, float("nan"),
                        float("nan"), I, I, diag, warn)
    D_I, I_fit, _ = fit_scaling(sc, y)
    plateau = float(y.mean())
    I = I_fit
    if abs(D_I) <= PLATEAU_SLOPE:
        I = plateau
        if abs(I_fit - plateau) > 0.05:
            warn.append(f"fit intercept {I_fit:.4f} and plateau {plateau:.4f} differ by > 0.05")
    steps = np.diff(y) / np.diff(np.log2(1.0 / np.array(sc)))
    if D_I > 0.1 and np.any(steps > 0.2):
        warn.append("I_eps grows by > 0.2 nats per halving of eps: mutual information diverges")
        I = float("nan")
    diag = float(np.max(np.abs(y - I))) if math.isfinite(I) else float("nan")
    return MIResult(table.scales, ie.tolist(), table.included, excluded, sc, D_I, I_fit,
                    plateau, I, diag, warn)


def kl_phase_to_uniform(e: Ensemble, spec: PartitionSpec | None = None,
                        table: ScaleTable | None = None) -> KLResult:
    """ln(N_phi cells) - H_phi(eps) per scale, fitted like scaling_fit.

    For sampled ensembles H_phi carries the same Miller-Madow correction as the
    other entropies (the plug-in value is biased low by about (K - 1) / 2n, which
    would otherwise tilt the fit); values are clamped at 0, the exact lower
    bound.  The fitted slope estimates (D - 1) - D_Phi.
    """
    spec = spec or PartitionSpec()
    table = table or scale_table(e, spec)
    idx = _window(table, spec, 3, True)
    kl = np.maximum(np.array(table.log_n_phi) - table.corrected("phi"), 0.0)
    sc = [table.scales[i] for i in idx]
    slope, icpt, _ = fit_scaling(sc, kl[idx])
    return KLResult(table.scales, kl.tolist(), sc, slope, icpt)
