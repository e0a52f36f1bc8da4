"""Reference implementations used to check the package.

These deliberately take different routes from the library code: explicit
eigenvectors instead of operator formulas, scipy's ``logm`` instead of
eigendecompositions, probabilities instead of expectation values.
"""
import math

import numpy as np
from scipy.linalg import logm
from scipy.optimize import minimize

LN2 = math.log(2.0)


def h(x):
    if x <= 0.0 or x >= 1.0:
        return 0.0
    return -(x * math.log(x) + (1 - x) * math.log(1 - x)) / LN2


def ket(theta):
    """+1 eigenvector of cos(theta) Z + sin(theta) X."""
    return np.array([math.cos(theta / 2), math.sin(theta / 2)], dtype=complex)


def alice_projectors(theta):
    up, down = ket(theta), ket(theta + math.pi)
    return [np.kron(np.outer(v, v.conj()), np.eye(2)) for v in (up, down)]


def pinch(rho, theta):
    return sum(p @ rho @ p for p in alice_projectors(theta))


def disturbance(rho, theta):
    return float(np.linalg.svd(rho - pinch(rho, theta), compute_uv=False).sum())


def vn_entropy(rho):
    w = np.linalg.eigvalsh(rho)
    return float(-sum(x * math.log2(x) for x in w if x > 1e-15))


def rel_entropy_logm(rho, sigma):
    return float(np.real(np.trace(rho @ (logm(rho) - logm(sigma)))) / LN2)


def weighted_entropy(rho, phi, lam):
    """lam H(A0|E) + (1 - lam) H(A1|E) via entropy production."""
    s = vn_entropy(rho)
    return lam * (vn_entropy(pinch(rho, 0.0)) - s) + (1 - lam) * (vn_entropy(pinch(rho, phi)) - s)


def joint_probability(rho, ta, tb, a, b):
    pa = np.outer(ket(ta + a * math.pi), ket(ta + a * math.pi).conj())
    pb = np.outer(ket(tb + b * math.pi), ket(tb + b * math.pi).conj())
    return float(np.real(np.trace(rho @ np.kron(pa, pb))))


def correlator(rho, ta, tb):
    p = [[joint_probability(rho, ta, tb, a, b) for b in (0, 1)] for a in (0, 1)]
    return p[0][0] + p[1][1] - p[0][1] - p[1][0]


def chsh(rho, phi, omega):
    """C12 - C02 - C03 - C13 with B2 at -omega and B3 at +omega."""
    c = lambda ta, tb: correlator(rho, ta, tb)
    return c(phi, -omega) - c(0.0, -omega) - c(0.0, omega) - c(phi, omega)


def chsh_planar_grid(rho, phi, n=721):
    return max(chsh(rho, phi, w) for w in np.linspace(-math.pi, math.pi, n))


def chsh_best_bob(rho, phi):
    """Largest CHSH value over arbitrary qubit observables of Bob (Bloch vectors)."""
    a0 = np.array([[1, 0], [0, -1]], dtype=complex)
    a1 = math.cos(phi) * a0 + math.sin(phi) * np.array([[0, 1], [1, 0]], dtype=complex)
    paulis = [np.array(m, dtype=complex) for m in ([[0, 1], [1, 0]], [[0, -1j], [1j, 0]], [[1, 0], [0, -1]])]
    u = np.array([np.real(np.trace(rho @ np.kron(a1 - a0, s))) for s in paulis])
    w = np.array([np.real(np.trace(rho @ np.kron(a1 + a0, s))) for s in paulis])
    return float(np.linalg.norm(u) + np.linalg.norm(w))


def analytic_single_basis(s):
    return 1.0 - h(0.5 + 0.5 * math.sqrt(max(s * s / 4.0 - 1.0, 0.0)))


BELL = [np.outer(v, v) for v in (
    np.array([1, 0, 0, 1]) / math.sqrt(2), np.array([1, 0, 0, -1]) / math.sqrt(2),
    np.array([0, 1, 1, 0]) / math.sqrt(2), np.array([0, 1, -1, 0]) / math.sqrt(2),
)]


def _rot(t):
    return np.array([[math.cos(t / 2), -math.sin(t / 2)], [math.sin(t / 2), math.cos(t / 2)]])


def bell_diagonal_state(x):
    w = np.abs(x[:4]) + 1e-12
    w = w / w.sum()
    u = np.kron(_rot(x[4]), _rot(x[5]))
    return u @ sum(wi * b for wi, b in zip(w, BELL)) @ u.T


def local_minimum(s, lam, trials, rng):
    """Smallest weighted entropy found by SLSQP over rotated Bell-diagonal states with CHSH = s."""
    best = math.inf
    for _ in range(trials):
        x0 = np.concatenate([rng.uniform(size=4), rng.uniform(0, 2 * math.pi, 2), [rng.uniform(0.1, 1.5)]])
        cons = {"type": "eq", "fun": lambda x: chsh_best_bob(bell_diagonal_state(x[:6]), x[6]) - s}
        bounds = [(None, None)] * 6 + [(0.0, math.pi / 2)]
        try:
            res = minimize(lambda x: weighted_entropy(bell_diagonal_state(x[:6]), x[6], lam), x0,
                           method="SLSQP", constraints=[cons], bounds=bounds, options={"maxiter": 500})
        except (ValueError, np.linalg.LinAlgError):
            continue
        if res.success and abs(cons["fun"](res.x)) < 1e-6:
            best = min(best, float(res.fun))
    return best


def random_state(rng, rank=None):
    rank = rank or int(rng.integers(1, 5))
    g = rng.normal(size=(4, rank)) + 1j * rng.normal(size=(4, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def random_local_unitary(rng):
    def su2():
        q = rng.normal(size=4)
        q /= np.linalg.norm(q)
        return np.array([[q[0] + 1j * q[3], q[2] + 1j * q[1]], [-q[2] + 1j * q[1], q[0] - 1j * q[3]]])
    return np.kron(su2(), su2())


def high_chsh_state(rng):
    """Noisy, locally rotated Bell-diagonal state; often violates CHSH."""
    w = rng.dirichlet(np.full(4, 0.3))
    rho = sum(wi * b for wi, b in zip(w, BELL))
    u = random_local_unitary(rng) if rng.uniform() < 0.5 else np.kron(_rot(rng.uniform(0, 2 * math.pi)), np.eye(2))
    rho = u @ rho @ u.conj().T
    t = rng.uniform(0, 0.3)
    return (1 - t) * rho + t * random_state(rng)


# Batched versions for large random scans ---------------------------------------

_PAULIS = np.array([[[0, 1], [1, 0]], [[0, -1j], [1j, 0]], [[1, 0], [0, -1]]], dtype=complex)


def _batch_entropy(rhos):
    w = np.clip(np.linalg.eigvalsh(rhos), 0.0, None)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(w > 1e-15, -w * np.log2(w), 0.0)
    return terms.sum(axis=-1)


def _batch_pinch(rhos, phis):
    out = np.zeros_like(rhos)
    for sign in (0.0, math.pi):
        v = np.stack([np.cos((phis + sign) / 2), np.sin((phis + sign) / 2)], axis=-1).astype(complex)
        p2 = v[:, :, None] * v[:, None, :].conj()
        p = np.einsum("nab,cd->nacbd", p2, np.eye(2)).reshape(-1, 4, 4)
        out += p @ rhos @ p
    return out


def random_config_batch(n, rng):
    """Random (rho, phi) pairs, half generic and half near-maximally violating."""
    rhos = np.empty((n, 4, 4), dtype=complex)
    for i in range(n):
        rhos[i] = high_chsh_state(rng) if i % 2 else random_state(rng)
    phis = rng.uniform(0.0, math.pi / 2, n)
    # violating states need nearly orthogonal settings to reach large CHSH values
    phis[1::2] = np.clip(math.pi / 2 - np.abs(rng.normal(0.0, 0.3, len(phis[1::2]))), 0.0, math.pi / 2)
    return rhos, phis


def batch_entropy_and_chsh(rhos, phis, lam):
    """Weighted conditional entropy and Bob-optimised CHSH for each configuration."""
    s = _batch_entropy(rhos)
    h0 = _batch_entropy(_batch_pinch(rhos, np.zeros_like(phis))) - s
    h1 = _batch_entropy(_batch_pinch(rhos, phis)) - s
    a0 = np.array([[1, 0], [0, -1]], dtype=complex)
    a1 = np.cos(phis)[:, None, None] * a0 + np.sin(phis)[:, None, None] * _PAULIS[0]
    u = np.einsum("nab,kcd->nkacbd", a1 - a0, _PAULIS).reshape(len(phis), 3, 4, 4)
    w = np.einsum("nab,kcd->nkacbd", a1 + a0, _PAULIS).reshape(len(phis), 3, 4, 4)
    eu = np.real(np.einsum("nij,nkji->nk", rhos, u))
    ew = np.real(np.einsum("nij,nkji->nk", rhos, w))
    chsh_val = np.linalg.norm(eu, axis=1) + np.linalg.norm(ew, axis=1)
    return lam * h0 + (1 - lam) * h1, chsh_val
