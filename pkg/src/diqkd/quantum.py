"""Two-qubit states, planar observables and CHSH quantities.

All measurements live in the x-z plane of the Bloch sphere.  Alice measures
``A0 = sigma_z`` and ``A1`` at angle ``phi``; Bob's two test observables sit
symmetrically about the z-axis, ``B2`` at ``-omega`` and ``B3`` at ``+omega``,
so that

    (A1 - A0) (x) B2 - (A1 + A0) (x) B3 = -2 cos(omega) A0 (x) Z - 2 sin(omega) A1 (x) X.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

SQRT2 = np.sqrt(2.0)
TSIRELSON = 2.0 * SQRT2

I2 = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-10
PSD_TOL = 1e-10


def observable(theta: float) -> np.ndarray:
    """Return the +-1 valued observable ``cos(theta) Z + sin(theta) X``."""
    if not np.isfinite(theta):
        raise ValueError("angle must be finite")
    return np.cos(theta) * SIGMA_Z + np.sin(theta) * SIGMA_X


observable_from_angle = observable


def projector(theta: float) -> np.ndarray:
    """Projector onto the +1 eigenspace of :func:`observable`."""
    return 0.5 * (I2 + observable(theta))


@dataclass(frozen=True)
class MeasurementFrame:
    """Relative measurement angles of the two-qubit model.

    ``bob_key_angles`` defaults to the anti-aligned key settings
    ``(pi, phi + pi)``, which give zero QBER on the singlet.
    """

    phi: float = np.pi / 2
    omega: float = np.pi / 4
    bob_key_angles: Optional[Tuple[float, float]] = None

    def __post_init__(self):
        angles = [self.phi, self.omega] + list(self.bob_key_angles or ())
        if not all(np.isfinite(a) for a in angles):
            raise ValueError("all angles must be finite")
        if not 0.0 <= self.phi <= np.pi / 2 + 1e-12:
            raise ValueError(f"phi={self.phi} outside [0, pi/2]")

    @property
    def alice(self) -> Tuple[np.ndarray, np.ndarray]:
        return observable(0.0), observable(self.phi)

    @property
    def bob_key(self) -> Tuple[np.ndarray, np.ndarray]:
        b0, b1 = self.bob_key_angles or (np.pi, self.phi + np.pi)
        return observable(b0), observable(b1)

    @property
    def bob_test(self) -> Tuple[np.ndarray, np.ndarray]:
        return observable(-self.omega), observable(self.omega)

    def alice_observable(self, x: int) -> np.ndarray:
        return self.alice[x]

    def bob_observable(self, y: int) -> np.ndarray:
        return (self.bob_key + self.bob_test)[y]


def is_hermitian(op: np.ndarray, tol: float = HERMITIAN_TOL) -> bool:
    return bool(np.max(np.abs(op - op.conj().T)) <= tol)


def check_density_matrix(rho: np.ndarray) -> np.ndarray:
    """Validate a 4x4 density matrix and return it as a complex array."""
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (4, 4):
        raise ValueError(f"expected a 4x4 matrix, got shape {rho.shape}")
    if not is_hermitian(rho):
        raise ValueError("density matrix is not Hermitian")
    if abs(np.trace(rho).real - 1.0) > TRACE_TOL:
        raise ValueError("density matrix does not have unit trace")
    if np.linalg.eigvalsh(rho)[0] < -PSD_TOL:
        raise ValueError("density matrix is not positive semidefinite")
    return rho


def ket_to_dm(psi: np.ndarray) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex).ravel()
    psi = psi / np.linalg.norm(psi)
    return np.outer(psi, psi.conj())


def singlet() -> np.ndarray:
    """|psi-><psi-| with |psi-> = (|01> - |10>)/sqrt(2)."""
    return ket_to_dm(np.array([0, 1, -1, 0]) / SQRT2)


def werner_state(v: float) -> np.ndarray:
    """Singlet mixed with white noise: ``v |psi-><psi-| + (1 - v) I/4``."""
    if not 0.0 <= v <= 1.0:
        raise ValueError(f"visibility v={v} outside [0, 1]")
    return v * singlet() + (1.0 - v) * np.eye(4, dtype=complex) / 4.0


def chsh_operator(frame: MeasurementFrame) -> np.ndarray:
    """``(A1 - A0) (x) B2 - (A1 + A0) (x) B3`` for the given frame."""
    a0, a1 = frame.alice
    b2, b3 = frame.bob_test
    return np.kron(a1 - a0, b2) - np.kron(a1 + a0, b3)


def expectation(rho: np.ndarray, op: np.ndarray) -> float:
    return float(np.real(np.trace(rho @ op)))


def chsh_value(rho: np.ndarray, frame: MeasurementFrame) -> float:
    """Raw CHSH expectation ``C12 - C02 - C03 - C13`` (no floor at 2)."""
    return expectation(rho, chsh_operator(frame))


def correlation(rho: np.ndarray, alice_obs: np.ndarray, bob_obs: np.ndarray) -> float:
    """``P(a = b) - P(a != b)`` for two +-1 observables."""
    return expectation(rho, np.kron(alice_obs, bob_obs))


def qber(rho: np.ndarray, alice_obs: np.ndarray, bob_obs: np.ndarray) -> float:
    """Probability that the outcomes of the two observables disagree."""
    return 0.5 * (1.0 - correlation(rho, alice_obs, bob_obs))


def depolarizing_qber(s: float) -> float:
    """QBER tied to the CHSH value by white noise: ``(1 - S/(2 sqrt 2))/2``."""
    if not 0.0 <= s <= TSIRELSON + 1e-12:
        raise ValueError(f"S={s} outside [0, 2*sqrt(2)]")
    return 0.5 * (1.0 - s / TSIRELSON)


def werner_visibility(s: float) -> float:
    """Visibility of the Werner state reaching CHSH value ``s``."""
    return s / TSIRELSON


def chsh_planar_max(rho: np.ndarray, phi: float) -> float:
    """Largest CHSH value over Bob's test settings in the x-z plane.

    Equals the Euclidean norm of ``(<-2 A0 (x) Z>, <-2 A1 (x) X>)``.
    """
    a0, a1 = observable(0.0), observable(phi)
    vz = -2.0 * expectation(rho, np.kron(a0, SIGMA_Z))
    vx = -2.0 * expectation(rho, np.kron(a1, SIGMA_X))
    return float(np.hypot(vz, vx))


def chsh_max_over_bob(rho: np.ndarray, phi: float) -> float:
    """Largest CHSH value over arbitrary projective qubit measurements of Bob.

    For fixed Alice observables the optimum is ``|u| + |w|`` with
    ``u_k = <(A1 - A0) (x) sigma_k>`` and ``w_k = <(A1 + A0) (x) sigma_k>``.
    """
    a0, a1 = observable(0.0), observable(phi)
    paulis = (SIGMA_X, SIGMA_Y, SIGMA_Z)
    u = [expectation(rho, np.kron(a1 - a0, p)) for p in paulis]
    w = [expectation(rho, np.kron(a1 + a0, p)) for p in paulis]
    return float(np.linalg.norm(u) + np.linalg.norm(w))


@dataclass(frozen=True)
class ChannelPoint:
    """Observed channel parameters: CHSH value and the two key-basis QBERs."""

    s: float
    q00: float
    q11: float

    def __post_init__(self):
        if not 2.0 - 1e-12 <= self.s <= TSIRELSON + 1e-9:
            raise ValueError(f"S={self.s} outside [2, 2*sqrt(2)]")
        for q in (self.q00, self.q11):
            if not 0.0 <= q <= 0.5:
                raise ValueError(f"QBER {q} outside [0, 1/2]")

    @classmethod
    def depolarizing(cls, s: float) -> "ChannelPoint":
        q = depolarizing_qber(s)
        return cls(s, q, q)


def random_pure_state(dim: int, rng: np.random.Generator) -> np.ndarray:
    psi = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return psi / np.linalg.norm(psi)


def random_density_matrix(rng: np.random.Generator, rank: int = 4) -> np.ndarray:
    """Random 4x4 state drawn from the induced (Hilbert-Schmidt) measure."""
    g = rng.normal(size=(4, rank)) + 1j * rng.normal(size=(4, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real
