"""Trace-norm SDP for the weighted pinching disturbance.

Solves

    min  lam * ||rho - T_0[rho]||_1 + (1 - lam) * ||rho - T_phi[rho]||_1
    s.t. rho >= 0, tr rho = 1, tr[rho (F0 + bz Fz + bx Fx(phi))] in [s_lo, s_hi]

through the epigraph form ``||X||_1 <= (tr Y + tr Z)/2`` with
``[[Y, X], [X^T, Z]] >= 0``.  Since ``||rho - T[rho]||_1 = 2 ||Q rho Q'||_1`` the
off-diagonal block ``X`` is the 2x2 block ``Q rho Q'`` and the disturbance is
``tr Y + tr Z`` at the optimum.

All operator data is real, so the optimum is attained on real symmetric
states (average any optimiser with its complex conjugate); the program is
posed over real symmetric matrices throughout.

Every solve reports a dual value computed from the solver's dual iterate after
projection onto the dual cone, with the residual ``q + A^T z`` charged against
the a-priori bound ``|x_i| <= 1`` on every primal coordinate.  That value is a
valid lower bound on the program regardless of solver accuracy.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import clarabel
import numpy as np
import scipy.sparse as sp

from .quantum import SIGMA_X, SIGMA_Z, observable

GAP_LIMIT = 1e-6
DEFAULT_TOL = 1e-9

_SQ2 = np.sqrt(2.0)
_ZZ = np.kron(SIGMA_Z, SIGMA_Z).real
_ZX = np.kron(SIGMA_Z, SIGMA_X).real
_XX = np.kron(SIGMA_X, SIGMA_X).real


def _sym_basis(n: int) -> np.ndarray:
    basis = []
    for i in range(n):
        m = np.zeros((n, n))
        m[i, i] = 1.0
        basis.append(m)
    for i in range(n):
        for j in range(i + 1, n):
            m = np.zeros((n, n))
            m[i, j] = m[j, i] = 1.0
            basis.append(m)
    return np.array(basis)


_B4 = _sym_basis(4)
_B2 = _sym_basis(2)
_N4, _N2 = len(_B4), len(_B2)
_TRIU4 = [(i, j) for j in range(4) for i in range(j + 1)]
_SVEC_SCALE = np.array([1.0 if i == j else _SQ2 for i, j in _TRIU4])
_SVEC_DIM = len(_TRIU4)


def _svec(m: np.ndarray) -> np.ndarray:
    """Clarabel's scaled upper-triangle (column-major) vectorisation."""
    rows = np.array([i for i, _ in _TRIU4])
    cols = np.array([j for _, j in _TRIU4])
    return m[..., rows, cols] * _SVEC_SCALE


def _smat(v: np.ndarray) -> np.ndarray:
    m = np.zeros((4, 4))
    for k, (i, j) in enumerate(_TRIU4):
        m[i, j] = m[j, i] = v[k] / _SVEC_SCALE[k]
    return m


def _block(m: np.ndarray, a: int, b: int) -> np.ndarray:
    return m[..., 2 * a:2 * a + 2, 2 * b:2 * b + 2]


def _epigraph_embed(x: np.ndarray) -> np.ndarray:
    """Place a stack of 2x2 blocks in the off-diagonal of 4x4 symmetric matrices."""
    big = np.zeros(x.shape[:-2] + (4, 4))
    big[..., :2, 2:] = x
    big[..., 2:, :2] = np.swapaxes(x, -1, -2)
    return big


# Columns (per basis element of rho) of the epigraph cones.  For an Alice
# observable at angle phi the off-diagonal block is
#   X(phi) = (rho01 - rho10)/2 + cos(phi) (rho01 + rho10)/2 + sin(phi) (rho11 - rho00)/2.
_R00, _R01 = _block(_B4, 0, 0), _block(_B4, 0, 1)
_R10, _R11 = _block(_B4, 1, 0), _block(_B4, 1, 1)
_EPI_ZERO = -_svec(_epigraph_embed(_R01)).T
_EPI_CONST = -_svec(_epigraph_embed(0.5 * (_R01 - _R10))).T
_EPI_COS = -_svec(_epigraph_embed(0.5 * (_R01 + _R10))).T
_EPI_SIN = -_svec(_epigraph_embed(0.5 * (_R11 - _R00))).T
_RHO_PSD = -_svec(_B4).T


def _yz_columns() -> np.ndarray:
    cols = np.zeros((_SVEC_DIM, 2 * _N2))
    for k, m in enumerate(_B2):
        big = np.zeros((4, 4))
        big[:2, :2] = m
        cols[:, k] = -_svec(big)
        big = np.zeros((4, 4))
        big[2:, 2:] = m
        cols[:, _N2 + k] = -_svec(big)
    return cols


_YZ = _yz_columns()
_TR4 = np.trace(_B4, axis1=1, axis2=2)
_TR2 = np.trace(_B2, axis1=1, axis2=2)
_TR_YZ = np.concatenate([_TR2, _TR2])
_COEF_ZZ = np.einsum("kij,ji->k", _B4, _ZZ)
_COEF_ZX = np.einsum("kij,ji->k", _B4, _ZX)
_COEF_XX = np.einsum("kij,ji->k", _B4, _XX)


@dataclass(frozen=True)
class ChshDecomposition:
    """CHSH operator split as ``f0 + sin(omega) fx + cos(omega) fz``."""

    phi: float
    f0: np.ndarray
    fx: np.ndarray
    fz: np.ndarray

    def operator(self, b: Sequence[float]) -> np.ndarray:
        """``F0 + bz Fz + bx Fx`` for ``b = (bz, bx)``."""
        bz, bx = b
        return self.f0 + bz * self.fz + bx * self.fx


def build_chsh_decomposition(phi: float) -> ChshDecomposition:
    if not 0.0 <= phi <= np.pi / 2 + 1e-12:
        raise ValueError(f"phi={phi} outside [0, pi/2]")
    a0, a1 = observable(0.0), observable(phi)
    return ChshDecomposition(
        phi=phi,
        f0=np.zeros((4, 4), dtype=complex),
        fx=-2.0 * np.kron(a1, SIGMA_X),
        fz=-2.0 * np.kron(a0, SIGMA_Z),
    )


def chsh_norm_bound(phi: float, b: Sequence[float]) -> float:
    """Largest eigenvalue of ``bz Fz + bx Fx(phi)`` for a unit vector ``b``.

    ``(bz Fz + bx Fx)^2 = 4 + 8 bz bx sin(phi) Y (x) Y``, hence
    ``2 sqrt(1 + 2 |bz bx| sin(phi))``.
    """
    bz, bx = b
    return 2.0 * np.sqrt(1.0 + 2.0 * abs(bz * bx) * np.sin(phi))


@dataclass
class SdpSolution:
    primal_value: float
    dual_value: float
    gap: float
    status: str
    rho: Optional[np.ndarray] = field(default=None, repr=False)
    iterations: int = 0

    @property
    def certified(self) -> bool:
        return self.status == "optimal"


def _infeasible() -> SdpSolution:
    return SdpSolution(np.inf, np.inf, 0.0, "infeasible")


def _project_dual(z: np.ndarray, n_free: int, n_nonneg: int, n_psd: int) -> np.ndarray:
    z = z.copy()
    lo = n_free
    z[lo:lo + n_nonneg] = np.maximum(z[lo:lo + n_nonneg], 0.0)
    lo += n_nonneg
    for _ in range(n_psd):
        w, v = np.linalg.eigh(_smat(z[lo:lo + _SVEC_DIM]))
        z[lo:lo + _SVEC_DIM] = _svec((v * np.maximum(w, 0.0)) @ v.T)
        lo += _SVEC_DIM
    return z


def solve_relaxation(
    vertices: Sequence[Tuple[float, float]],
    b: Sequence[float],
    lam: float,
    s_lo: float,
    s_hi: Optional[float] = None,
    tol: float = DEFAULT_TOL,
) -> SdpSolution:
    """Weighted-disturbance SDP over a convex hull of Alice angles.

    ``vertices`` are points ``(c, s)`` standing in for ``(cos phi, sin phi)``.
    A single vertex on the unit circle is the plain program at that angle.
    With several vertices the state is split as ``rho = sum_i rho_i`` and every
    phi-dependent quantity uses ``sum_i (c_i, s_i) rho_i``; when the vertices'
    hull contains the arc ``{(cos phi, sin phi)}`` of an angle interval, the
    value lower-bounds the plain program at every angle of the interval.
    """
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda={lam} outside [0, 1]")
    bz, bx = b
    m = len(vertices)
    n_rho = m * _N4
    n = n_rho + 4 * _N2

    eq = np.zeros((1, n))
    eq[0, :n_rho] = np.tile(_TR4, m)

    chsh = np.zeros(n)
    for i, (c, s) in enumerate(vertices):
        chsh[i * _N4:(i + 1) * _N4] = -2.0 * (bz * _COEF_ZZ + bx * (c * _COEF_ZX + s * _COEF_XX))
    ineq_rows = [-chsh]
    ineq_b = [-s_lo]
    if s_hi is not None:
        ineq_rows.append(chsh)
        ineq_b.append(s_hi)
    for e in range(2):
        row = np.zeros(n)
        row[n_rho + 2 * _N2 * e:n_rho + 2 * _N2 * (e + 1)] = _TR_YZ
        ineq_rows.append(row)
        ineq_b.append(1.0)

    psd = []
    for i in range(m):
        blk = np.zeros((_SVEC_DIM, n))
        blk[:, i * _N4:(i + 1) * _N4] = _RHO_PSD
        psd.append(blk)
    for e in range(2):
        blk = np.zeros((_SVEC_DIM, n))
        for i, (c, s) in enumerate(vertices):
            cols = _EPI_ZERO if e == 0 else _EPI_CONST + c * _EPI_COS + s * _EPI_SIN
            blk[:, i * _N4:(i + 1) * _N4] = cols
        blk[:, n_rho + 2 * _N2 * e:n_rho + 2 * _N2 * (e + 1)] = _YZ
        psd.append(blk)

    a = np.vstack([eq, np.array(ineq_rows)] + psd)
    rhs = np.concatenate([[1.0], ineq_b, np.zeros(_SVEC_DIM * len(psd))])
    q = np.zeros(n)
    q[n_rho:n_rho + 2 * _N2] = lam * _TR_YZ
    q[n_rho + 2 * _N2:] = (1.0 - lam) * _TR_YZ

    n_ineq = len(ineq_rows)
    cones = [clarabel.ZeroConeT(1), clarabel.NonnegativeConeT(n_ineq)]
    cones += [clarabel.PSDTriangleConeT(4)] * len(psd)
    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.tol_gap_abs = tol
    settings.tol_gap_rel = tol
    settings.tol_feas = tol
    a_sparse = sp.csc_matrix(a)
    sol = clarabel.DefaultSolver(sp.csc_matrix((n, n)), q, a_sparse, rhs, cones, settings).solve()
    status = str(sol.status)
    if "Infeasible" in status and "Dual" not in status:
        return _infeasible()

    x = np.asarray(sol.x)
    z = _project_dual(np.asarray(sol.z), 1, n_ineq, len(psd))
    residual = q + a_sparse.T @ z
    # every primal coordinate is bounded by 1 on the feasible set
    dual = float(-rhs @ z - np.sum(np.abs(residual)))
    primal = float(q @ x)
    gap = primal - dual
    rho = sum(x[i * _N4:(i + 1) * _N4] @ _B4.reshape(_N4, 16) for i in range(m)).reshape(4, 4)
    ok = status == "Solved" and gap <= GAP_LIMIT
    return SdpSolution(
        primal_value=primal,
        dual_value=dual,
        gap=gap,
        status="optimal" if ok else "numerical_limit",
        rho=rho.astype(complex),
        iterations=int(sol.iterations),
    )


def solve_weighted_delta_sdp(
    phi: float,
    b: Sequence[float],
    lam: float,
    s: float,
    slack: float = 0.0,
    tol: float = DEFAULT_TOL,
    sense: str = "eq",
) -> SdpSolution:
    """Minimise ``lam delta(rho, 0) + (1 - lam) delta(rho, phi)`` at CHSH value ``s``.

    ``sense="eq"`` imposes ``|<F0 + F.b> - s| <= slack``; ``sense="ge"``
    imposes ``<F0 + F.b> >= s - slack``.
    """
    b = np.asarray(b, dtype=float)
    if abs(np.linalg.norm(b) - 1.0) > 1e-12:
        raise ValueError("b must be a unit vector")
    if slack < 0:
        raise ValueError("slack must be nonnegative")
    if sense not in ("eq", "ge"):
        raise ValueError(f"unknown constraint sense {sense!r}")
    lo = s - slack
    hi = s + slack if sense == "eq" else None
    top = chsh_norm_bound(phi, b)
    if lo > top + 1e-12 or (hi is not None and hi < -top - 1e-12):
        return _infeasible()
    return solve_relaxation([(np.cos(phi), np.sin(phi))], b, lam, lo, hi, tol)


def arc_vertices(phi_lo: float, phi_hi: float) -> list:
    """Triangle containing the unit-circle arc between two angles.

    Vertices are the arc endpoints and the intersection of their tangents.
    """
    if not 0.0 <= phi_hi - phi_lo < np.pi / 2 + 1e-12:
        raise ValueError("arc must be shorter than pi/2")
    if phi_hi == phi_lo:
        return [(np.cos(phi_lo), np.sin(phi_lo))]
    mid, half = 0.5 * (phi_lo + phi_hi), 0.5 * (phi_hi - phi_lo)
    return [
        (np.cos(phi_lo), np.sin(phi_lo)),
        (np.cos(phi_hi), np.sin(phi_hi)),
        (np.cos(mid) / np.cos(half), np.sin(mid) / np.cos(half)),
    ]


def solve_arc_relaxation(
    phi_lo: float,
    phi_hi: float,
    b: Sequence[float],
    lam: float,
    s_min: float,
    tol: float = DEFAULT_TOL,
) -> SdpSolution:
    """Lower bound of the ``<F.b> >= s_min`` program over ``phi`` in an interval."""
    return solve_relaxation(arc_vertices(phi_lo, phi_hi), b, lam, s_min, None, tol)
