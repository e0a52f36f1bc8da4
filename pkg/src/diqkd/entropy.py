"""Entropies, pinching channels and the refined Pinsker bound (all in bits)."""
from __future__ import annotations

import numpy as np

from .quantum import I2, observable

EIG_CLAMP = 1e-14


def binary_entropy(x):
    """Binary entropy ``h(x)`` in bits, with ``0 log 0 = 0``.

    Accepts scalars or arrays.
    """
    x = np.asarray(x, dtype=float)
    if np.any((x < 0.0) | (x > 1.0)):
        raise ValueError("binary entropy argument outside [0, 1]")
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -x * np.log2(x) - (1.0 - x) * np.log2(1.0 - x)
    h = np.where((x <= 0.0) | (x >= 1.0), 0.0, h)
    return float(h) if h.ndim == 0 else h


def _clamped_eigvalsh(rho: np.ndarray) -> np.ndarray:
    w = np.linalg.eigvalsh(rho)
    return np.where(w > EIG_CLAMP, w, 0.0)


def von_neumann_entropy(rho: np.ndarray) -> float:
    w = _clamped_eigvalsh(rho)
    w = w[w > 0]
    return float(-np.sum(w * np.log2(w)))


def trace_norm(op: np.ndarray) -> float:
    return float(np.sum(np.abs(np.linalg.eigvalsh(op))))


def alice_projector(phi: float) -> np.ndarray:
    """``Q(phi) = (I + cos(phi) Z + sin(phi) X)/2 (x) I`` on the qubit pair."""
    return np.kron(0.5 * (I2 + observable(phi)), I2)


def pinching(rho: np.ndarray, phi: float) -> np.ndarray:
    """Dephase Alice's qubit in the eigenbasis of her observable at ``phi``."""
    q = alice_projector(phi)
    qc = np.eye(4) - q
    return q @ rho @ q + qc @ rho @ qc


def delta_trace_norm(rho: np.ndarray, phi: float) -> float:
    """Disturbance ``|| {rho, Q} - 2 Q rho Q ||_1``, equal to ``|| rho - T[rho] ||_1``."""
    q = alice_projector(phi)
    return trace_norm(rho @ q + q @ rho - 2.0 * q @ rho @ q)


def refined_pinsker(delta):
    """Entropy lower bound ``g(delta) = 1 - h(1/2 - delta/2)`` for a pinching."""
    delta = np.asarray(delta, dtype=float)
    if np.any((delta < -1e-12) | (delta > 1.0 + 1e-12)):
        raise ValueError("trace-norm distance outside [0, 1]")
    return 1.0 - binary_entropy(np.clip(0.5 - 0.5 * delta, 0.0, 1.0))


def _eigh_clamped(rho: np.ndarray) -> tuple:
    w, v = np.linalg.eigh(rho)
    return np.where(w > EIG_CLAMP, w, 0.0), v


def relative_entropy(rho: np.ndarray, sigma: np.ndarray) -> float:
    """Quantum relative entropy ``D(rho || sigma)`` in bits.

    Returns ``inf`` when the support of ``rho`` is not contained in that of
    ``sigma``.
    """
    wr, vr = _eigh_clamped(rho)
    ws, vs = _eigh_clamped(sigma)
    # <r_i| P_sigma-kernel |r_i> weight of rho outside supp(sigma)
    kernel = vs[:, ws <= 0]
    if kernel.size:
        leak = np.real(np.trace(kernel.conj().T @ rho @ kernel))
        if leak > 1e-10:
            return float("inf")
    pos_r = wr > 0
    term_r = np.sum(wr[pos_r] * np.log2(wr[pos_r]))
    # tr(rho log sigma) = sum_j log(s_j) <s_j|rho|s_j>
    overlap = np.real(np.einsum("ij,ik,kj->j", vs.conj(), rho, vs))
    pos_s = ws > 0
    term_s = np.sum(overlap[pos_s] * np.log2(ws[pos_s]))
    return float(max(term_r - term_s, 0.0))


def entropy_production(rho: np.ndarray, phi: float) -> float:
    """``H(T[rho]) - H(rho)``; Eve's conditional entropy of Alice's outcome."""
    return von_neumann_entropy(pinching(rho, phi)) - von_neumann_entropy(rho)


def conditional_entropy_oracle(rho: np.ndarray, phi: float, lam: float) -> float:
    """``lam H(A0|E) + (1 - lam) H(A1|E)`` with Eve holding a purification."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda={lam} outside [0, 1]")
    h_rho = von_neumann_entropy(rho)
    h0 = von_neumann_entropy(pinching(rho, 0.0)) - h_rho
    h1 = von_neumann_entropy(pinching(rho, phi)) - h_rho
    return lam * h0 + (1.0 - lam) * h1
