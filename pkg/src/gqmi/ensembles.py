"""Weighted ensembles of pure states and the samplers that build them.

An :class:`Ensemble` keeps its points as flat arrays (weights ``w``, probabilities
``p`` and phases ``phi``) so that ensembles of 10^7 points fit in memory.  A
composite ensemble produced by :func:`tensor` carries several coordinate
*blocks*, one per subsystem; ``p`` and ``phi`` are then the concatenation of the
block coordinates.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np
from scipy import stats

from . import _mcmc
from .geometry import (TWO_PI, StatePoint, amplitudes_to_coords_array,
                       canonical_phases, coords_to_amplitudes_array, wrap_phase)

WEIGHT_TOL = 1e-9
_CHUNK = 1 << 18


class EnsembleFormatError(ValueError):
    """Malformed JSONL sample file; ``line`` is 1-based."""

    def __init__(self, line: int, msg: str):
        super().__init__(f"line {line}: {msg}")
        self.line = line


@dataclass(frozen=True)
class McmcConfig:
    sigma_p: float = 0.15
    sigma_phi: float = 1.5
    burn: int = 10_000
    thin: int = 10
    chains: int = 8
    jump_prob: float = 0.02  # share of uniform independence proposals

    def __post_init__(self):
        if not (self.sigma_p > 0 and self.sigma_phi > 0):
            raise ValueError("proposal step sizes must be positive")
        if self.burn < 0:
            raise ValueError("burn-in must be >= 0")
        if self.thin < 1:
            raise ValueError("thinning stride must be >= 1")
        if self.chains < 1:
            raise ValueError("chain count must be >= 1")
        if not 0.0 <= self.jump_prob < 1.0:
            raise ValueError("jump_prob must lie in [0, 1)")

    @classmethod
    def for_fs_width(cls, sigma: float, **kw) -> "McmcConfig":
        # near p = 1/2 the FS line element is ds^2 = dp^2 + dphi^2/4
        return cls(sigma_p=min(0.15, 1.5 * sigma), sigma_phi=min(1.5, 3.0 * sigma), **kw)

    def as_dict(self):
        return {"sigma_p": self.sigma_p, "sigma_phi": self.sigma_phi, "burn": self.burn,
                "thin": self.thin, "chains": self.chains, "jump_prob": self.jump_prob}


def _canon_blocks(p, phi, blocks):
    out = np.empty_like(phi)
    s = 0
    for d in blocks:
        out[:, s:s + d] = canonical_phases(p[:, s:s + d], phi[:, s:s + d])
        s += d
    return out


@dataclass(frozen=True, eq=False)
class Ensemble:
    """Weighted collection of pure states in probability-phase coordinates.

    ``sampled`` marks ensembles that are random draws from a continuous law (as
    opposed to exact discrete measures such as projected ensembles); the
    estimators use it to decide whether finite-sample corrections apply.
    """

    w: np.ndarray
    p: np.ndarray
    phi: np.ndarray
    blocks: tuple = ()
    generator: str = "explicit"
    params: dict = field(default_factory=dict)
    seed: int | None = None
    sampled: bool = False
    diagnostics: dict = field(default_factory=dict)
    canonicalize: bool = field(default=True, repr=False)

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float).reshape(-1)
        p = np.asarray(self.p, dtype=float)
        phi = np.asarray(self.phi, dtype=float)
        if p.ndim == 1:
            p = p[None, :]
            phi = phi.reshape(1, -1)
        if p.shape != phi.shape or p.shape[0] != w.size:
            raise ValueError(f"inconsistent shapes w{w.shape} p{p.shape} phi{phi.shape}")
        if w.size == 0:
            raise ValueError("ensemble is empty")
        blocks = tuple(int(b) for b in self.blocks) or (p.shape[1],)
        if sum(blocks) != p.shape[1] or min(blocks) < 2:
            raise ValueError(f"blocks {blocks} do not fit {p.shape[1]} coordinates")
        if np.any(w < 0) or abs(w.sum() - 1.0) > WEIGHT_TOL:
            raise ValueError(f"weights must be >= 0 and sum to 1 (sum={w.sum()!r})")
        if np.any(p < 0) or np.any(p > 1):
            raise ValueError("probabilities outside [0, 1]")
        s = 0
        for d in blocks:
            dev = np.max(np.abs(p[:, s:s + d].sum(axis=1) - 1.0))
            if dev > WEIGHT_TOL:
                raise ValueError(f"probability rows deviate from the simplex by {dev:.3g}")
            s += d
        if self.canonicalize:
            phi = _canon_blocks(p, phi, blocks)
        for a in (w, p, phi):
            a.setflags(write=False)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "blocks", blocks)
        object.__setattr__(self, "params", dict(self.params))
        object.__setattr__(self, "diagnostics", dict(self.diagnostics))

    @property
    def n(self) -> int:
        return self.w.size

    @property
    def dim(self) -> int:
        """Hilbert-space dimension (product of block dimensions)."""
        return int(np.prod(self.blocks))

    @property
    def meta(self) -> dict:
        return {"dim": self.dim, "generator": self.generator, "params": self.params,
                "seed": self.seed, "n": self.n, "blocks": list(self.blocks),
                "sampled": self.sampled, "diagnostics": self.diagnostics}

    @property
    def n_eff(self) -> float:
        return 1.0 / float(np.sum(self.w**2))

    def point(self, i: int) -> StatePoint:
        if len(self.blocks) != 1:
            raise ValueError("composite ensemble points are not single StatePoints")
        return StatePoint(self.p[i], self.phi[i])

    @property
    def points(self) -> Iterator[tuple[float, StatePoint]]:
        for i in range(self.n):
            yield float(self.w[i]), self.point(i)

    def amplitudes(self, start=0, stop=None) -> np.ndarray:
        """Amplitude rows for points ``start:stop``; composite blocks are Kronecker-combined."""
        sl = slice(start, stop)
        out = None
        s = 0
        for d in self.blocks:
            a = coords_to_amplitudes_array(self.p[sl, s:s + d], self.phi[sl, s:s + d])
            out = a if out is None else (out[:, :, None] * a[:, None, :]).reshape(a.shape[0], -1)
            s += d
        return out

    def meta_summary(self) -> dict:
        return {"generator": self.generator, "params": self.params, "seed": self.seed, "n": self.n}

    def same_points(self, other: "Ensemble") -> bool:
        return (self.blocks == other.blocks and np.array_equal(self.w, other.w)
                and np.array_equal(self.p, other.p) and np.array_equal(self.phi, other.phi))


def _equal_weights(n):
    return np.full(n, 1.0 / n)


def _qubit_arrays(p1, phi1):
    p = np.column_stack([1.0 - p1, p1])
    phi = np.column_stack([np.zeros_like(phi1), wrap_phase(phi1)])
    return p, phi


def _check_n(n):
    if int(n) != n or n < 1:
        raise ValueError(f"sample count must be a positive integer, got {n!r}")
    return int(n)


def sample_dirac(x0: StatePoint, n: int) -> Ensemble:
    n = _check_n(n)
    return Ensemble(_equal_weights(n), np.tile(x0.p, (n, 1)), np.tile(x0.phi, (n, 1)),
                    generator="dirac", params={"p": x0.p.tolist(), "phi": x0.phi.tolist()},
                    sampled=False)


def sample_haar(D: int, n: int, seed: int) -> Ensemble:
    """Unitarily invariant ensemble: normalised complex Gaussian vectors.

    Generation is chunked, with one spawned stream per chunk, so memory stays
    bounded and the output depends only on (D, n, seed).
    """
    if D < 2:
        raise ValueError("D must be >= 2")
    n = _check_n(n)
    p = np.empty((n, D))
    phi = np.empty((n, D))
    nchunks = -(-n // _CHUNK)
    for k, child in enumerate(np.random.SeedSequence(seed).spawn(nchunks)):
        rng = np.random.default_rng(child)
        lo, hi = k * _CHUNK, min(n, (k + 1) * _CHUNK)
        z = rng.standard_normal((hi - lo, D)) + 1j * rng.standard_normal((hi - lo, D))
        z /= np.linalg.norm(z, axis=1, keepdims=True)
        pp, ff = amplitudes_to_coords_array(z)
        p[lo:hi] = pp / pp.sum(axis=1, keepdims=True)
        phi[lo:hi] = ff
    return Ensemble(_equal_weights(n), p, phi, generator="haar", params={"D": D},
                    seed=seed, sampled=True, canonicalize=False)


def sample_diagonal(p0, n: int, seed: int) -> Ensemble:
    """Fixed probabilities ``p0`` with independent uniform relative phases."""
    p0 = np.asarray(p0, dtype=float)
    if p0.ndim != 1 or p0.size < 2 or np.any(p0 < 0) or abs(p0.sum() - 1) > 1e-12:
        raise ValueError("p0 must be a point of the probability simplex")
    n = _check_n(n)
    rng = np.random.default_rng(seed)
    phi = np.zeros((n, p0.size))
    phi[:, 1:] = rng.random((n, p0.size - 1)) * TWO_PI
    return Ensemble(_equal_weights(n), np.tile(p0, (n, 1)), phi, generator="diagonal",
                    params={"p0": p0.tolist()}, seed=seed, sampled=True)


def sample_naive_gaussian(p0: float, phi0: float, sigma_p: float, sigma_phi: float,
                          n: int, seed: int) -> Ensemble:
    """Qubit with p_1 and phi_1 drawn from independent truncated Gaussians."""
    if not (sigma_p > 0 and sigma_phi > 0):
        raise ValueError("sigma_p and sigma_phi must be positive")
    n = _check_n(n)
    rng = np.random.default_rng(seed)
    p1 = stats.truncnorm.rvs(-p0 / sigma_p, (1 - p0) / sigma_p, loc=p0, scale=sigma_p,
                             size=n, random_state=rng)
    f1 = stats.truncnorm.rvs(-phi0 / sigma_phi, (TWO_PI - phi0) / sigma_phi, loc=phi0,
                             scale=sigma_phi, size=n, random_state=rng)
    p, phi = _qubit_arrays(np.clip(p1, 0.0, 1.0), f1)
    return Ensemble(_equal_weights(n), p, phi, generator="naive-gaussian",
                    params={"p0": p0, "phi0": phi0, "sigma_p": sigma_p, "sigma_phi": sigma_phi},
                    seed=seed, sampled=True)


def _mcmc_ensemble(kind, params, n, seed, cfg, name, meta_params):
    p1, f1, rate = _mcmc.sample_chains(kind, params, n, seed, cfg.sigma_p, cfg.sigma_phi,
                                       cfg.burn, cfg.thin, cfg.chains, cfg.jump_prob)
    diag = {"acceptance_rate": rate, "chains": cfg.chains, "mcmc": cfg.as_dict()}
    if not 0.1 <= rate <= 0.9:
        diag["warning"] = f"acceptance rate {rate:.3f} outside [0.1, 0.9]"
    p, phi = _qubit_arrays(p1, f1)
    return Ensemble(_equal_weights(n), p, phi, generator=name, params=meta_params,
                    seed=seed, sampled=True, diagnostics=diag)


def sample_canonical(beta: float, g: float, n: int, seed: int,
                     cfg: McmcConfig | None = None) -> Ensemble:
    """Qubit ensemble with density proportional to exp(-beta h_g(p, phi)) in dp dphi."""
    if beta < 0:
        raise ValueError("beta must be >= 0")
    n = _check_n(n)
    cfg = cfg or McmcConfig()
    return _mcmc_ensemble(_mcmc.CANONICAL, (beta, g), n, seed, cfg, "canonical",
                          {"beta": beta, "g": g})


def sample_fs_gaussian(x0: StatePoint | None, sigma: float, n: int, seed: int,
                       cfg: McmcConfig | None = None) -> Ensemble:
    """Qubit ensemble with density proportional to exp(-d_FS(x, x0)^2 / 2 sigma^2) in dp dphi.

    Default centre is the equator state p = 1/2, phi = pi.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    x0 = x0 or StatePoint.qubit(0.5, np.pi)
    if x0.dim != 2:
        raise ValueError("fs-gaussian is defined for qubits only")
    n = _check_n(n)
    cfg = cfg or McmcConfig.for_fs_width(sigma)
    return _mcmc_ensemble(_mcmc.FS_GAUSSIAN, (x0.p[1], x0.phi[1], sigma), n, seed, cfg,
                          "fs-gaussian", {"p0": float(x0.p[1]), "phi0": float(x0.phi[1]),
                                          "sigma": sigma})


def sample_spiral(delta: float, n: int, seed: int) -> Ensemble:
    """p ~ U(0,1) and phi = 2 pi p + U(-delta, delta), reduced mod 2 pi."""
    if not 0.0 <= delta <= np.pi:
        raise ValueError(f"delta must lie in [0, pi], got {delta!r}")
    n = _check_n(n)
    rng = np.random.default_rng(seed)
    p1 = rng.random(n)
    noise = rng.uniform(-delta, delta, n) if delta > 0 else np.zeros(n)
    p, phi = _qubit_arrays(p1, TWO_PI * p1 + noise)
    diag = {}
    if delta == 0:
        diag["warning"] = "delta = 0: joint measure is supported on a curve; I diverges"
    return Ensemble(_equal_weights(n), p, phi, generator="spiral", params={"delta": delta},
                    seed=seed, sampled=True, diagnostics=diag)


def mix(e1: Ensemble, e2: Ensemble, lam: float) -> Ensemble:
    """Convex combination lam * e1 + (1 - lam) * e2; zero-weight points are dropped."""
    if e1.blocks != e2.blocks:
        raise ValueError(f"dimension mismatch: {e1.blocks} vs {e2.blocks}")
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lambda must lie in [0, 1]")
    if lam == 1.0:
        return e1
    if lam == 0.0:
        return e2
    w = np.concatenate([lam * e1.w, (1 - lam) * e2.w])
    w /= w.sum()
    return Ensemble(w, np.vstack([e1.p, e2.p]), np.vstack([e1.phi, e2.phi]), blocks=e1.blocks,
                    generator="mix", params={"lambda": lam, "a": e1.meta_summary(),
                                             "b": e2.meta_summary()},
                    sampled=e1.sampled or e2.sampled, canonicalize=False)


@dataclass(frozen=True)
class TruncGaussP:
    """Additive Gaussian noise on the probabilities p_1..p_{D-1}; off-simplex draws are redrawn."""
    sigma: float

    def as_dict(self):
        return {"kind": "trunc-gauss-p", "sigma": self.sigma}


@dataclass(frozen=True)
class WrappedUniformPhi:
    """Additive uniform noise of full width ``width`` on each relative phase, wrapped mod 2pi."""
    width: float

    def as_dict(self):
        return {"kind": "wrapped-uniform-phi", "width": self.width}


def product_channel(e: Ensemble, noise_p: TruncGaussP | None,
                    noise_phi: WrappedUniformPhi | None, seed: int,
                    max_rounds: int = 10_000) -> Ensemble:
    """Apply independent kernels to p and phi of every point (a free operation).

    ``None`` is the identity kernel.  Only single-block ensembles are supported.
    """
    if len(e.blocks) != 1:
        raise ValueError("product_channel acts on single-system ensembles")
    if noise_p is None and noise_phi is None:
        return e
    rng = np.random.default_rng(seed)
    p = e.p.copy()
    phi = e.phi.copy()
    redraws = 0
    if noise_p is not None and noise_p.sigma > 0:
        base = e.p[:, 1:]
        todo = np.arange(e.n)
        new = np.empty_like(base)
        for _ in range(max_rounds):
            cand = base[todo] + rng.normal(0.0, noise_p.sigma, (todo.size, base.shape[1]))
            ok = np.all(cand >= 0, axis=1) & (cand.sum(axis=1) <= 1.0)
            new[todo[ok]] = cand[ok]
            redraws += int((~ok).sum())
            todo = todo[~ok]
            if todo.size == 0:
                break
        else:
            raise RuntimeError("p kernel rejection did not terminate")
        p[:, 1:] = new
        p[:, 0] = np.clip(1.0 - new.sum(axis=1), 0.0, 1.0)
    if noise_phi is not None and noise_phi.width > 0:
        h = noise_phi.width / 2.0
        phi[:, 1:] = wrap_phase(phi[:, 1:] + rng.uniform(-h, h, (e.n, e.p.shape[1] - 1)))
    params = {"input": e.meta_summary(),
              "noise_p": None if noise_p is None else noise_p.as_dict(),
              "noise_phi": None if noise_phi is None else noise_phi.as_dict()}
    return Ensemble(e.w.copy(), p, phi, generator="product-channel", params=params, seed=seed,
                    sampled=e.sampled, diagnostics={"p_redraws": redraws})


def tensor(e1: Ensemble, e2: Ensemble) -> Ensemble:
    """Composite ensemble of two independent subsystems.

    Sampled ensembles are paired point by point (truncated to the shorter one),
    which is an independent draw from the product measure.  Two exact ensembles
    are combined by their full outer product.
    """
    blocks = e1.blocks + e2.blocks
    if e1.sampled or e2.sampled:
        m = min(e1.n, e2.n)
        w = e1.w[:m] * e2.w[:m]
        p = np.hstack([e1.p[:m], e2.p[:m]])
        phi = np.hstack([e1.phi[:m], e2.phi[:m]])
    else:
        i, j = np.divmod(np.arange(e1.n * e2.n), e2.n)
        w = e1.w[i] * e2.w[j]
        p = np.hstack([e1.p[i], e2.p[j]])
        phi = np.hstack([e1.phi[i], e2.phi[j]])
    return Ensemble(w / w.sum(), p, phi, blocks=blocks, generator="tensor",
                    params={"a": e1.meta_summary(), "b": e2.meta_summary()},
                    sampled=e1.sampled or e2.sampled, canonicalize=False)


# --- JSONL serialisation -------------------------------------------------------

def _fmt_list(a):
    return "[" + ", ".join(repr(x) for x in a) + "]"


def write_jsonl(e: Ensemble, path) -> None:
    """One metadata record, then one ``{"w", "p", "phi"}`` record per point.

    Floats are written with Python's shortest round-trip repr, so reading the
    file back reproduces every weight and coordinate bit for bit.
    """
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(e.meta, sort_keys=True) + "\n")
        w = e.w.tolist()
        p = e.p.tolist()
        phi = e.phi.tolist()
        buf = []
        for i in range(e.n):
            buf.append(f'{{"w": {w[i]!r}, "p": {_fmt_list(p[i])}, "phi": {_fmt_list(phi[i])}}}\n')
            if len(buf) >= 65536:
                fh.write("".join(buf))
                buf.clear()
        fh.write("".join(buf))


def read_jsonl(path) -> Ensemble:
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
        try:
            meta = json.loads(first)
            dim = int(meta["dim"])
            n = int(meta["n"])
        except (ValueError, KeyError, TypeError) as exc:
            raise EnsembleFormatError(1, f"bad metadata record ({exc})") from None
        blocks = tuple(meta.get("blocks") or [dim])
        width = sum(blocks)
        w = np.empty(n)
        p = np.empty((n, width))
        phi = np.empty((n, width))
        i = 0
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            if i >= n:
                raise EnsembleFormatError(lineno, f"more records than n={n}")
            try:
                rec = json.loads(line)
                w[i] = rec["w"]
                p[i] = rec["p"]
                phi[i] = rec["phi"]
            except (ValueError, KeyError, TypeError) as exc:
                raise EnsembleFormatError(lineno, f"bad point record ({exc})") from None
            i += 1
        if i != n:
            raise EnsembleFormatError(i + 2, f"expected {n} point records, found {i}")
    try:
        return Ensemble(w, p, phi, blocks=blocks, generator=meta.get("generator", "explicit"),
                        params=meta.get("params") or {}, seed=meta.get("seed"),
                        sampled=bool(meta.get("sampled", False)),
                        diagnostics=meta.get("diagnostics") or {})
    except ValueError as exc:
        raise EnsembleFormatError(1, f"invalid ensemble: {exc}") from None
