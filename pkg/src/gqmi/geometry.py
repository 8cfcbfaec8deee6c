"""Probability-phase coordinates for pure states.

A pure state ``|psi> = sum_k Z^k |e_k>`` is written as ``Z^k = sqrt(p_k) exp(i phi_k)``.
The global phase is fixed by setting the phase of the *gauge anchor* to zero; the
anchor is the lowest index whose probability exceeds :data:`ANCHOR_TOL`.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * np.pi
ANCHOR_TOL = 1e-14
NORM_TOL = 1e-9


def wrap_phase(phi):
    """Reduce phases to [0, 2pi), mapping the rounding artefact 2pi back to 0."""
    out = np.mod(phi, TWO_PI)
    return np.where(out >= TWO_PI, 0.0, out)


def canonical_phases(p: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """Apply the gauge and zero-amplitude conventions row-wise.

    ``p`` and ``phi`` have shape (n, D). Returns phases relative to the anchor,
    wrapped to [0, 2pi), with phase 0 wherever ``p_k == 0``.
    """
    anchor = np.argmax(p > ANCHOR_TOL, axis=1)
    rows = np.arange(p.shape[0])
    out = wrap_phase(phi - phi[rows, anchor][:, None])
    out[rows, anchor] = 0.0
    out[p == 0.0] = 0.0
    return out


def amplitudes_to_coords_array(psi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised conversion of normalised amplitude rows (n, D) to (p, phi)."""
    psi = np.asarray(psi, dtype=complex)
    p = psi.real**2 + psi.imag**2
    anchor = np.argmax(p > ANCHOR_TOL, axis=1)
    ref = np.conj(psi[np.arange(psi.shape[0]), anchor])
    phi = canonical_phases(p, np.angle(psi * ref[:, None]))
    return p, phi


def coords_to_amplitudes_array(p: np.ndarray, phi: np.ndarray) -> np.ndarray:
    return np.sqrt(p) * np.exp(1j * phi)


@dataclass(frozen=True, eq=False)
class StatePoint:
    """A pure state in probability-phase coordinates.

    ``p`` and ``phi`` both have length ``D``. Phases are canonicalised on
    construction: reduced mod 2pi, shifted so the anchor phase is 0, and zeroed
    wherever the probability vanishes.
    """

    p: np.ndarray
    phi: np.ndarray

    def __post_init__(self):
        p = np.array(self.p, dtype=float).reshape(-1)
        phi = np.array(self.phi, dtype=float).reshape(-1)
        if p.shape != phi.shape:
            raise ValueError(f"p and phi lengths differ: {p.size} vs {phi.size}")
        if p.size < 2:
            raise ValueError("dimension must be at least 2")
        if np.any(p < 0.0) or np.any(p > 1.0):
            raise ValueError("probabilities must lie in [0, 1]")
        if abs(p.sum() - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {p.sum()!r}, not 1")
        phi = canonical_phases(p[None, :], phi[None, :])[0]
        p.setflags(write=False)
        phi.setflags(write=False)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "phi", phi)

    @property
    def dim(self) -> int:
        return self.p.size

    def __eq__(self, other):
        if not isinstance(other, StatePoint):
            return NotImplemented
        return np.array_equal(self.p, other.p) and np.array_equal(self.phi, other.phi)

    def __hash__(self):
        return hash((self.p.tobytes(), self.phi.tobytes()))

    def __repr__(self):
        return f"StatePoint(p={self.p.tolist()}, phi={self.phi.tolist()})"

    @classmethod
    def qubit(cls, p1: float, phi1: float = 0.0) -> "StatePoint":
        """The state sqrt(1-p1)|0> + sqrt(p1) e^{i phi1}|1>."""
        return cls([1.0 - p1, p1], [0.0, phi1])


def amplitudes_to_coords(psi) -> StatePoint:
    """Convert a normalised amplitude vector to a :class:`StatePoint`.

    Raises ``ValueError`` if the norm deviates from one by more than 1e-9.
    """
    psi = np.asarray(psi, dtype=complex).reshape(-1)
    norm = np.linalg.norm(psi)
    if abs(norm - 1.0) > NORM_TOL:
        raise ValueError(f"amplitude vector has norm {norm!r}; expected 1")
    p, phi = amplitudes_to_coords_array(psi[None, :])
    # renormalise away the <=1e-9 slack so the StatePoint invariant holds
    return StatePoint(p[0] / p[0].sum(), phi[0])


def coords_to_amplitudes(x: StatePoint) -> np.ndarray:
    return coords_to_amplitudes_array(x.p, x.phi)


def fs_distance(x: StatePoint, y: StatePoint) -> float:
    """Fubini-Study distance ``arccos|<psi(x)|psi(y)>|`` in [0, pi/2].

    Evaluated as ``atan2(|r|, |o|)`` where ``o`` is the overlap and ``r`` the part of
    ``psi(y)`` orthogonal to ``psi(x)``; this stays accurate for nearby states where
    ``arccos`` loses half of the significant digits.
    """
    if x.dim != y.dim:
        raise ValueError(f"dimension mismatch: {x.dim} vs {y.dim}")
    a = coords_to_amplitudes(x)
    b = coords_to_amplitudes(y)
    o = np.vdot(a, b)
    r = np.linalg.norm(b - o * a)
    return float(np.arctan2(r, abs(o)))


def qubit_energy(x: StatePoint, g: float) -> float:
    """``h_g(p, phi) = 1 - 2p + 2g sqrt(p(1-p)) cos(phi)`` with p = p_1, phi = phi_1.

    This is the expectation of ``sigma_z + g sigma_x`` on the qubit state.
    """
    if x.dim != 2:
        raise ValueError("qubit_energy needs a qubit state (dim 2)")
    p, phi = x.p[1], x.phi[1]
    return float(1.0 - 2.0 * p + 2.0 * g * np.sqrt(p * (1.0 - p)) * np.cos(phi))


def expectation_value(x: StatePoint, H) -> float:
    H = np.asarray(H, dtype=complex)
    if H.shape != (x.dim, x.dim):
        raise ValueError(f"operator shape {H.shape} does not match dim {x.dim}")
    if np.linalg.norm(H - H.conj().T) > 1e-10:
        raise ValueError("operator is not Hermitian")
    psi = coords_to_amplitudes(x)
    return float(np.vdot(psi, H @ psi).real)
