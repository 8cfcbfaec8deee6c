"""Self-contained numerical checks: oracles, axioms C1-C6, surplus non-negativity, spin chain.

Each ``criterion_*`` function returns a :class:`Check`.  The same functions back
the ``verify`` command (at reduced sample size) and the acceptance tests.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from . import ensembles as ens
from .coherence import coherence_surplus, density_from_ensemble, entropy_gap_check
from .estimators import (InsufficientScalesError, PartitionSpec, mutual_information,
                         scale_table, scaling_fit)
from .geometry import StatePoint
from .spinchain import (ChainConfig, build_hamiltonian, evolve, initial_state, mi_time_series,
                        partial_trace_qubit, projected_ensemble)

NOISE_FLOOR = 0.02


@dataclass
class Check:
    name: str
    passed: bool
    detail: str
    values: dict = field(default_factory=dict)

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


@dataclass
class Summary:
    name: str
    I: float
    D_I: float
    D_joint: float
    H_G_joint: float
    delta_C: float
    surplus_holds: bool
    gap_holds: bool
    seconds: float
    error: str = ""


def summarize(e: ens.Ensemble, name: str, spec: PartitionSpec | None = None) -> Summary:
    t0 = time.perf_counter()
    spec = spec or PartitionSpec()
    tb = scale_table(e, spec)
    try:
        mi = mutual_information(e, spec, table=tb)
        jf = scaling_fit(e, spec, "joint", table=tb)
        rho = density_from_ensemble(e)
        sur = coherence_surplus(e, spec, table=tb, rho=rho)
        gap = entropy_gap_check(e, spec, table=tb, rho=rho)
    except InsufficientScalesError as exc:
        nan = float("nan")
        return Summary(name, nan, nan, nan, nan, nan, False, False,
                       time.perf_counter() - t0, str(exc))
    return Summary(name, mi.I, mi.D_I, jf.dimension, jf.intercept, sur.delta_C, sur.holds,
                   gap.holds, time.perf_counter() - t0)


class Bench:
    """Deterministic ensemble recipes plus a cache of their estimator summaries."""

    def __init__(self, n: int, seed: int = 2024):
        self.n = n
        self.seed = seed
        self.recipes: dict = {}
        self.summaries: dict = {}
        self.sample_seconds: dict = {}

    def add(self, name, fn):
        self.recipes.setdefault(name, fn)
        return name

    def ensemble(self, name) -> ens.Ensemble:
        t0 = time.perf_counter()
        e = self.recipes[name]()
        self.sample_seconds[name] = time.perf_counter() - t0
        return e

    def summary(self, name) -> Summary:
        if name not in self.summaries:
            self.summaries[name] = summarize(self.ensemble(name), name)
        return self.summaries[name]

    # recipes shared between criteria
    def spiral(self, delta):
        return self.add(f"spiral({delta:.4f})", lambda: ens.sample_spiral(delta, self.n, self.seed))

    def haar(self, D, n=None):
        n = n or self.n
        return self.add(f"haar(D={D},n={n})", lambda: ens.sample_haar(D, n, self.seed + D))

    def dirac(self):
        return self.add("dirac", lambda: ens.sample_dirac(StatePoint.qubit(0.3, 1.0), self.n))

    def diagonal(self):
        return self.add("diagonal", lambda: ens.sample_diagonal([0.3, 0.7], self.n, self.seed + 3))

    def naive(self):
        return self.add("naive-gaussian", lambda: ens.sample_naive_gaussian(
            0.5, np.pi, 0.05, 0.3, self.n, self.seed + 4))

    def canonical(self, beta, g):
        return self.add(f"canonical(beta={beta},g={g})",
                        lambda: ens.sample_canonical(beta, g, self.n, self.seed + 5))

    def fs(self, sigma):
        return self.add(f"fs-gaussian({sigma:.4f})",
                        lambda: ens.sample_fs_gaussian(None, sigma, self.n, self.seed + 6))


SPIRAL_DELTAS = (np.pi / 8, np.pi / 4, np.pi / 2, 3 * np.pi / 4, np.pi)
BETAS = (0.5, 1.0, 2.0, 5.0)
FS_SIGMAS = tuple(np.linspace(0.05, 1.5, 15))


def _fmt(x):
    return "nan" if not math.isfinite(x) else f"{x:.4f}"


def criterion_1(b: Bench) -> Check:
    rows, ok = [], True
    for d in SPIRAL_DELTAS:
        name = b.spiral(d)
        s = b.summary(name)
        true = math.log(math.pi / d)
        secs = b.sample_seconds.get(name, 0.0) + s.seconds
        good = math.isfinite(s.I) and abs(s.I - true) <= 0.05 and secs < 60
        ok &= good
        rows.append((d, s.I, true, secs))
    Is = [r[1] for r in rows]
    mono = all(a > c for a, c in zip(Is, Is[1:]))
    detail = "; ".join(f"d={d:.3f} I={_fmt(i)} (ln(pi/d)={t:.4f}, {s:.1f}s)" for d, i, t, s in rows)
    return Check("spiral closed form", ok and mono, f"{detail}; monotone={mono}",
                 {"I": Is, "monotone": mono})


def criterion_2(b: Bench) -> Check:
    names = [b.haar(2), b.haar(3), b.dirac(), b.diagonal(), b.naive()]
    names += [b.canonical(beta, 0.0) for beta in BETAS]
    vals = {nm: b.summary(nm).I for nm in names}
    ok = all(math.isfinite(v) and abs(v) <= NOISE_FLOOR for v in vals.values())
    return Check("product-measure null", ok, ", ".join(f"{k} I={_fmt(v)}" for k, v in vals.items()),
                 vals)


def criterion_3(b: Bench, n_d3: int | None = None) -> Check:
    h2 = b.summary(b.haar(2))
    h3 = b.summary(b.haar(3, n_d3 or 10 * b.n))
    dr = b.summary(b.dirac())
    sp = [b.summary(b.spiral(d)) for d in SPIRAL_DELTAS]
    parts = {
        "haar2": abs(h2.D_joint - 2.0) <= 0.1,
        "haar3": abs(h3.D_joint - 4.0) <= 0.15,
        "dirac": dr.D_joint == 0.0 and dr.H_G_joint == 0.0,
        "spiral": all(math.isfinite(s.D_I) and abs(s.D_I) <= 0.05 for s in sp),
    }
    detail = (f"D(haar2)={_fmt(h2.D_joint)} D(haar3)={_fmt(h3.D_joint)} "
              f"D(dirac)={dr.D_joint!r} H_G(dirac)={dr.H_G_joint!r} "
              f"D_I(spiral)=[{', '.join(_fmt(s.D_I) for s in sp)}]")
    return Check("dimension recovery", all(parts.values()), detail, parts)


def criterion_4(b: Bench) -> Check:
    i5 = [b.summary(b.canonical(beta, 0.5)).I for beta in BETAS]
    i0 = [b.summary(b.canonical(beta, 0.0)).I for beta in BETAS]
    steps = np.diff(i5)
    rising = bool(np.all(steps > NOISE_FLOOR))
    null = all(v <= NOISE_FLOOR for v in i0)
    detail = (f"I(g=0.5)=[{', '.join(_fmt(v) for v in i5)}] steps=[{', '.join(_fmt(v) for v in steps)}]"
              f" I(g=0)=[{', '.join(_fmt(v) for v in i0)}]")
    return Check("canonical trends", rising and null, detail, {"I_g05": i5, "I_g0": i0})


def criterion_5(b: Bench) -> Check:
    Is = np.array([b.summary(b.fs(s)).I for s in FS_SIGMAS])
    k = int(np.nanargmax(Is))
    interior = 0 < k < len(Is) - 1
    margin = float(Is[k] - max(Is[0], Is[-1]))
    ok = interior and margin > 0.05
    return Check("fs-gaussian peak", ok,
                 f"argmax sigma={FS_SIGMAS[k]:.3f} max I={_fmt(Is[k])} margin over endpoints={_fmt(margin)}",
                 {"I": Is.tolist()})


def _qubit_pool(b: Bench):
    names = [b.spiral(d) for d in SPIRAL_DELTAS] + [b.haar(2), b.dirac(), b.diagonal(), b.naive()]
    names += [b.canonical(beta, g) for beta in BETAS for g in (0.0, 0.5)]
    names += [b.fs(s) for s in FS_SIGMAS]
    return names


def criterion_6(b: Bench, n_mix: int = 20) -> Check:
    names = _qubit_pool(b) + [b.haar(3)]
    bad = []
    worst = float("inf")
    for nm in names:
        s = b.summary(nm)
        if not (s.surplus_holds and s.gap_holds):
            bad.append(nm)
        if math.isfinite(s.delta_C):
            worst = min(worst, s.delta_C)
    rng = np.random.default_rng(b.seed + 66)
    pool = _qubit_pool(b)
    for j in range(n_mix):
        a, c = rng.choice(len(pool), 2, replace=False)
        lam = float(rng.uniform(0.1, 0.9))
        e = ens.mix(b.ensemble(pool[a]), b.ensemble(pool[c]), lam)
        s = summarize(e, f"mix{j}")
        if not (s.surplus_holds and s.gap_holds):
            bad.append(f"mix({pool[a]},{pool[c]},{lam:.2f})")
        if math.isfinite(s.delta_C):
            worst = min(worst, s.delta_C)
    return Check("coherence surplus grid", not bad,
                 f"{len(names) + n_mix} ensembles, min fitted delta_C={_fmt(worst)}, failing={bad}",
                 {"failing": bad})


def _random_qubit_ensemble(rng, n):
    kind = rng.integers(6)
    seed = int(rng.integers(2**31))
    if kind == 0:
        return ens.sample_spiral(float(rng.uniform(0.2, np.pi)), n, seed)
    if kind == 1:
        return ens.sample_haar(2, n, seed)
    if kind == 2:
        return ens.sample_diagonal([q := float(rng.uniform(0.05, 0.95)), 1 - q], n, seed)
    if kind == 3:
        return ens.sample_naive_gaussian(float(rng.uniform(0.2, 0.8)), float(rng.uniform(1, 5)),
                                         float(rng.uniform(0.03, 0.2)), float(rng.uniform(0.2, 1.0)),
                                         n, seed)
    if kind == 4:
        return ens.sample_canonical(float(rng.uniform(0, 5)), float(rng.uniform(0, 1)), n, seed)
    return ens.sample_dirac(StatePoint.qubit(float(rng.uniform(0.05, 0.95)),
                                             float(rng.uniform(0, 2 * np.pi))), n)


def _I(e):
    try:
        return mutual_information(e).I
    except InsufficientScalesError:
        return float("nan")


def criterion_7(b: Bench, n_pairs: int = 50) -> Check:
    n = b.n
    parts, notes = {}, []
    # C1 over everything summarised so far plus fresh random ensembles
    lows = {k: s.I for k, s in b.summaries.items() if math.isfinite(s.I)}
    rng = np.random.default_rng(b.seed + 77)
    # C2: product channels
    kernels = [(ens.TruncGaussP(0.05), None), (None, ens.WrappedUniformPhi(1.0)),
               (ens.TruncGaussP(0.02), ens.WrappedUniformPhi(0.5)),
               (None, ens.WrappedUniformPhi(2 * np.pi))]
    c2_worst = -float("inf")
    for nm in (b.spiral(np.pi / 4), b.canonical(5.0, 0.5), b.fs(FS_SIGMAS[4]), b.naive(), b.haar(2)):
        e = b.ensemble(nm)
        i_in = b.summary(nm).I
        for kp, kf in kernels:
            i_out = _I(ens.product_channel(e, kp, kf, seed=int(rng.integers(2**31))))
            lows[f"channel({nm})"] = i_out
            c2_worst = max(c2_worst, i_out - i_in)
    parts["C2"] = c2_worst <= 0.03
    notes.append(f"C2 max increase={_fmt(c2_worst)}")
    # C4: convexity on random pairs
    c4_worst = -float("inf")
    for j in range(n_pairs):
        e1 = _random_qubit_ensemble(rng, n)
        e2 = _random_qubit_ensemble(rng, n)
        lam = float(rng.uniform(0.05, 0.95))
        i1, i2, im = _I(e1), _I(e2), _I(ens.mix(e1, e2, lam))
        lows[f"pair{j}a"], lows[f"pair{j}b"], lows[f"pair{j}mix"] = i1, i2, im
        c4_worst = max(c4_worst, im - (lam * i1 + (1 - lam) * i2))
    parts["C4"] = c4_worst <= 0.03
    notes.append(f"C4 max excess={_fmt(c4_worst)}")
    # C5: Dirac ensembles
    c5 = 0.0
    for _ in range(10):
        x = StatePoint.qubit(float(rng.uniform(0, 1)), float(rng.uniform(0, 2 * np.pi)))
        c5 = max(c5, abs(mutual_information(ens.sample_dirac(x, 1000)).I))
    parts["C5"] = c5 <= 1e-9
    notes.append(f"C5 max |I|={c5:.2e}")
    # C6: additivity under tensor products
    s1 = ens.sample_spiral(np.pi / 4, n, b.seed + 101)
    s2 = ens.sample_spiral(np.pi / 4, n, b.seed + 102)
    hr = ens.sample_haar(2, n, b.seed + 103)
    i_s1, i_s2, i_h = _I(s1), _I(s2), _I(hr)
    i_ss = _I(ens.tensor(s1, s2))
    i_sh = _I(ens.tensor(s1, hr))
    add_ss = abs(i_ss - (i_s1 + i_s2))
    add_sh = abs(i_sh - (i_s1 + i_h))
    parts["C6"] = bool(add_ss <= 0.1 and add_sh <= 0.1)
    notes.append(f"C6 I(s x s)={_fmt(i_ss)} vs {_fmt(i_s1 + i_s2)}, I(s x haar)={_fmt(i_sh)} "
                 f"vs {_fmt(i_s1 + i_h)}")
    vals = [v for v in lows.values() if math.isfinite(v)]
    c1_min = min(vals) if vals else float("nan")
    parts["C1"] = bool(vals) and c1_min >= -0.02 and len(vals) == len(lows)
    notes.insert(0, f"C1 min I={_fmt(c1_min)} over {len(lows)} estimates")
    return Check("axiom suite", all(parts.values()), "; ".join(notes), parts)


def criterion_8(seed: int = 8, n_times: int = 20, long_L: int = 14, t_max: float = 20.0) -> Check:
    rng = np.random.default_rng(seed)
    notes, parts = [], {}
    cfg4 = ChainConfig(L=4, site=1)
    H4 = build_hamiltonian(cfg4)
    Hd = H4.toarray()
    err = 0.0
    for _ in range(5):
        v = rng.normal(size=16) + 1j * rng.normal(size=16)
        v /= np.linalg.norm(v)
        t = float(rng.uniform(0, 5))
        err = max(err, float(np.max(np.abs(evolve(v, H4, t) - expm(-1j * t * Hd) @ v))))
    parts["krylov"] = err <= 1e-8
    notes.append(f"L=4 Krylov vs expm max err={err:.2e}")
    pt = 0.0
    for L in (4, 5, 6):
        cfg = ChainConfig(L=L, site=L // 2, initial="+" * L)
        H = build_hamiltonian(cfg)
        psi = initial_state(cfg)
        for t in np.sort(rng.uniform(0, 10, n_times)):
            v = evolve(psi, H, float(t))
            site = int(rng.integers(L))
            rho = density_from_ensemble(projected_ensemble(v, site, L)).data
            pt = max(pt, float(np.max(np.abs(rho - partial_trace_qubit(v, site, L)))))
    parts["partial_trace"] = pt <= 1e-10
    notes.append(f"L<=6 projected vs partial trace max err={pt:.2e}")
    cfg = ChainConfig(L=long_L, t_max=t_max)
    H = build_hamiltonian(cfg)
    psi = initial_state(cfg)
    e0 = float(np.vdot(psi, H @ psi).real)
    nd = ed = 0.0
    for _ in cfg.times[1:]:
        psi = evolve(psi, H, cfg.dt)
        nd = max(nd, abs(float(np.linalg.norm(psi)) - 1))
        ed = max(ed, abs(float(np.vdot(psi, H @ psi).real) - e0))
    parts["conservation"] = nd <= 1e-8 and ed <= 1e-6
    notes.append(f"L={long_L} max norm drift={nd:.2e} energy drift={ed:.2e}")
    return Check("spin-chain oracles", all(parts.values()), "; ".join(notes), parts)


def criterion_9(cfg: ChainConfig | None = None) -> Check:
    cfg = cfg or ChainConfig()
    t0 = time.perf_counter()
    rows = mi_time_series(cfg)
    secs = time.perf_counter() - t0
    I = np.array([r.I for r in rows])
    q = len(I) // 4
    start = abs(I[0]) <= 1e-6
    early = I[1:q + 1]
    rise = bool(np.any(np.isfinite(early))) and float(np.nanmax(early)) > NOISE_FLOOR
    late = I[-q:]
    finite = bool(np.all(np.isfinite(late)))
    mean = float(np.mean(late)) if finite else float("nan")
    rel = float(np.std(late) / mean) if finite and mean > 0 else float("nan")
    plateau = finite and mean > 5 * NOISE_FLOOR and rel < 0.1
    ok = bool(start and rise and plateau and secs < 1800)
    nan_count = int(np.sum(~np.isfinite(I)))
    return Check("deep-thermalization shape", ok,
                 f"I_0={_fmt(I[0])} early max={_fmt(float(np.nanmax(early)) if np.any(np.isfinite(early)) else float('nan'))} "
                 f"late mean={_fmt(mean)} rel fluct={_fmt(rel)} undefined points={nan_count}/{len(I)} "
                 f"runtime={secs:.0f}s",
                 {"I": I.tolist(), "I_fixed": [r.I_fixed for r in rows]})


GROUPS = {
    "spiral": ("criterion_1",),
    "nulls": ("criterion_2",),
    "dimension": ("criterion_3",),
    "canonical": ("criterion_4",),
    "fsgauss": ("criterion_5",),
    "theorem1": ("criterion_6",),
    "axioms": ("criterion_7",),
    "chain": ("criterion_8",),
}


def run_suite(n: int = 100_000, only=None, seed: int = 2024, log=print) -> list[Check]:
    """Run the selected groups (all by default) and return their checks in order."""
    groups = list(GROUPS) if not only else list(only)
    unknown = [g for g in groups if g not in GROUPS]
    if unknown:
        raise ValueError(f"unknown check group(s) {unknown}; choose from {sorted(GROUPS)}")
    b = Bench(n, seed)
    out = []
    for g in GROUPS:
        if g not in groups:
            continue
        t0 = time.perf_counter()
        fn = globals()[GROUPS[g][0]]
        chk = fn() if g == "chain" else fn(b)
        chk.name = f"{g}: {chk.name}"
        out.append(chk)
        if log:
            log(f"{chk.line()} [{time.perf_counter() - t0:.1f}s]")
    return out
