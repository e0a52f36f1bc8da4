"""Certified lower bounds on ``lam H(A0|E) + (1 - lam) H(A1|E)`` from a CHSH value.

Pipeline
--------
1. For each CHSH value ``S`` on a grid, minimise the weighted pinching
   disturbance ``t = lam delta(rho, 0) + (1 - lam) delta(rho, phi)`` over
   two-qubit states, Alice angles ``phi`` and Bob directions ``b``.  The
   search runs best-first over boxes ``[phi_lo, phi_hi] x [omega_lo, omega_hi]``;
   each box gets an SDP lower bound valid for every point inside it, and
   boxes are split until the bound and the best point value agree to
   ``gap_tol`` bits (or a solve budget runs out).
2. ``C(S) = g(t*)`` with the refined Pinsker function ``g``; this is sound
   because ``g`` is convex and nondecreasing.
3. The final bound is the lower convex envelope of ``(S, C(S))`` together
   with the origin.

Bob directions.  A state with CHSH vector ``v = (<Fz>, <Fx>)`` reaches CHSH
value ``S`` for some Bob setting iff ``|v| >= S``.  If the direction of ``v``
lies within ``eps`` of ``b``, then ``b.v >= S cos(eps)``, so a sector of
half-width ``eps`` is covered by a single ``>=`` constraint with
multiplicative slack.  Local flips of Bob's qubit map ``(bz, bx)`` to
``(+-bz, +-bx)`` without changing the objective, so one quadrant suffices.

Alice angle.  Box bounds in ``lipschitz_mode="lifted"`` come from the convex
relaxation in :func:`diqkd.sdp.solve_arc_relaxation`.  The ``"certified"``
mode instead solves at the box centre and subtracts Lipschitz slacks with the
constants proved in ``docs/lipschitz.md`` (``L_delta = 1``, ``L_F = 2``);
``"empirical"`` uses constants estimated by dense sampling.
"""
from __future__ import annotations

import csv
import heapq
import itertools
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache
from importlib import resources
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .entropy import delta_trace_norm, refined_pinsker
from .quantum import TSIRELSON, random_density_matrix
from .sdp import (
    SdpSolution,
    build_chsh_decomposition,
    chsh_norm_bound,
    solve_arc_relaxation,
    solve_weighted_delta_sdp,
)

GAP_TOL = 1e-6
L_DELTA = 1.0
L_F = 2.0
LIPSCHITZ_MODES = ("lifted", "certified", "empirical")


class UnattainableError(ValueError):
    """No state and Bob direction reaches the requested CHSH value."""


def default_workers() -> int:
    return max(1, int(os.environ.get("DIQKD_WORKERS", "1")))


def _is_pow2(n: int) -> bool:
    return n > 0 and n & (n - 1) == 0


@dataclass(frozen=True)
class NetConfig:
    """Resolution and stopping rules of the bound computation.

    ``b_vertices`` counts initial polygon vertices on the full circle and
    ``phi_points`` the initial cells on ``[0, pi/2]``; adaptive refinement
    starts from that uniform net.
    """

    b_vertices: int = 16
    phi_points: int = 8
    s_grid: int = 121
    lipschitz_mode: str = "lifted"
    gap_tol: float = 1e-3
    max_solves: int = 20000
    min_width: float = 1e-5
    use_symmetry: bool = True
    sdp_tol: float = 1e-9

    def __post_init__(self):
        for name in ("b_vertices", "phi_points", "s_grid"):
            if getattr(self, name) < 8:
                raise ValueError(f"{name} must be at least 8")
        if self.b_vertices % 4 or not _is_pow2(self.b_vertices // 4):
            raise ValueError("b_vertices must be 4 times a power of two")
        if not _is_pow2(self.phi_points):
            raise ValueError("phi_points must be a power of two")
        if self.lipschitz_mode not in LIPSCHITZ_MODES:
            raise ValueError(f"lipschitz_mode must be one of {LIPSCHITZ_MODES}")

    @property
    def s_values(self) -> np.ndarray:
        return np.linspace(2.0, TSIRELSON, self.s_grid)

    def refined(self) -> "NetConfig":
        """Same configuration with both nets doubled."""
        return replace(self, b_vertices=2 * self.b_vertices, phi_points=2 * self.phi_points)


# Lipschitz constants -------------------------------------------------------

def lipschitz_constants(mode: str = "certified") -> Tuple[float, float]:
    """``(L_delta, L_F)`` for the requested mode."""
    if mode == "empirical":
        return _sampled_constants()
    return L_DELTA, L_F


@lru_cache(maxsize=None)
def _sampled_constants() -> Tuple[float, float]:
    ld, lf = estimate_lipschitz_constants(2000, np.random.default_rng(20201))
    return ld, lf


def estimate_lipschitz_constants(n: int, rng: np.random.Generator, step: float = 1e-3) -> Tuple[float, float]:
    """Largest observed difference quotients of ``delta(rho, .)`` and ``Fx(.)``."""
    ld = lf = 0.0
    for _ in range(n):
        rho = random_density_matrix(rng, rank=int(rng.integers(1, 5)))
        phi = rng.uniform(0.0, np.pi / 2 - step)
        h = rng.uniform(0.1, 1.0) * step
        ld = max(ld, abs(delta_trace_norm(rho, phi + h) - delta_trace_norm(rho, phi)) / h)
        fx0 = build_chsh_decomposition(phi).fx
        fx1 = build_chsh_decomposition(phi + h).fx
        lf = max(lf, np.linalg.norm(fx1 - fx0, 2) / h)
    return ld, lf


# Records -------------------------------------------------------------------

@dataclass(frozen=True)
class Certificate:
    phi_lo: float
    phi_hi: float
    omega_lo: float
    omega_hi: float
    bound: float
    gap: float


@dataclass
class EntropyBoundPoint:
    """Certified qubit-level bound at one CHSH value."""

    s: float
    t_star: float
    c_qubit: float
    slack_used: float
    t_upper: float = np.inf
    gap: float = 0.0
    n_solves: int = 0
    status: str = "optimal"
    certificates: List[Certificate] = field(default_factory=list, repr=False)


@dataclass(order=True)
class _Box:
    bound: float
    phi_lo: float = field(compare=False)
    phi_hi: float = field(compare=False)
    om_lo: float = field(compare=False)
    om_hi: float = field(compare=False)
    slack: float = field(compare=False, default=0.0)
    gap: float = field(compare=False, default=0.0)
    status: str = field(compare=False, default="optimal")

    def split(self, axis: str) -> Tuple[Tuple[float, float, float, float], ...]:
        if axis == "phi":
            m = 0.5 * (self.phi_lo + self.phi_hi)
            return ((self.phi_lo, m, self.om_lo, self.om_hi), (m, self.phi_hi, self.om_lo, self.om_hi))
        m = 0.5 * (self.om_lo + self.om_hi)
        return ((self.phi_lo, self.phi_hi, self.om_lo, m), (self.phi_lo, self.phi_hi, m, self.om_hi))


def _sector_max_sin2(om_lo: float, om_hi: float) -> float:
    # max of |sin 2w| over [om_lo, om_hi]
    k_lo = np.ceil((2 * om_lo - np.pi / 2) / np.pi)
    if np.pi / 2 + k_lo * np.pi <= 2 * om_hi:
        return 1.0
    return float(max(abs(np.sin(2 * om_lo)), abs(np.sin(2 * om_hi))))


class _BoxSolver:
    def __init__(self, lam: float, s: float, cfg: NetConfig):
        self.lam, self.s, self.cfg = lam, s, cfg
        self.n_solves = 0
        self.consts = lipschitz_constants(cfg.lipschitz_mode)

    def lower(self, phi_lo, phi_hi, om_lo, om_hi, parent: float) -> _Box:
        s, lam, cfg = self.s, self.lam, self.cfg
        box = _Box(np.inf, phi_lo, phi_hi, om_lo, om_hi)
        top = 2.0 * np.sqrt(1.0 + _sector_max_sin2(om_lo, om_hi) * np.sin(min(phi_hi, np.pi / 2)))
        if top < s - 1e-12:
            return box
        om = 0.5 * (om_lo + om_hi)
        eps = 0.5 * (om_hi - om_lo)
        b = (np.cos(om), np.sin(om))
        s_min = s * np.cos(eps)
        self.n_solves += 1
        if cfg.lipschitz_mode == "lifted":
            sol = solve_arc_relaxation(phi_lo, phi_hi, b, lam, s_min, cfg.sdp_tol)
            offset = 0.0
        else:
            l_delta, l_f = self.consts
            h = 0.5 * (phi_hi - phi_lo)
            s_min -= l_f * h * abs(b[1])
            sol = solve_weighted_delta_sdp(0.5 * (phi_lo + phi_hi), b, lam, s_min, sense="ge", tol=cfg.sdp_tol)
            offset = (1.0 - lam) * l_delta * h
        if sol.status == "infeasible":
            return box
        box.bound = max(sol.dual_value - offset, parent)
        box.slack = s - s_min
        box.gap = sol.gap
        box.status = sol.status
        return box

    def upper(self, box: _Box) -> float:
        phi = 0.5 * (box.phi_lo + box.phi_hi)
        om = 0.5 * (box.om_lo + box.om_hi)
        b = (np.cos(om), np.sin(om))
        if chsh_norm_bound(phi, b) < self.s:
            return np.inf
        self.n_solves += 1
        sol = solve_weighted_delta_sdp(phi, b, self.lam, self.s, sense="ge", tol=self.cfg.sdp_tol)
        return sol.primal_value if sol.status != "infeasible" else np.inf


def _g(t: float) -> float:
    return float(refined_pinsker(min(max(t, 0.0), 1.0)))


def _choose_axis(box: _Box, mode: str) -> str:
    wp = box.phi_hi - box.phi_lo
    wo = box.om_hi - box.om_lo
    # phi-gap grows linearly in the width, sector slack quadratically
    return "phi" if wp >= wo * wo else "omega"


def _initial_boxes(solver: _BoxSolver, cfg: NetConfig) -> List[_Box]:
    quarter = np.pi / 2
    roots = [(0.0, quarter, 0.0, quarter)] if cfg.use_symmetry else [
        (0.0, quarter, k * quarter, (k + 1) * quarter) for k in range(4)
    ]
    sectors_per_quarter = cfg.b_vertices // 4
    boxes = [solver.lower(*r, parent=-np.inf) for r in roots]
    n_phi, n_om = 1, 1
    while n_phi < cfg.phi_points or n_om < sectors_per_quarter:
        axis = "phi" if n_phi * 2 <= cfg.phi_points and (n_phi <= n_om or n_om >= sectors_per_quarter) else "omega"
        nxt = []
        for box in boxes:
            for child in box.split(axis):
                if box.bound == np.inf:
                    nxt.append(_Box(np.inf, *child))
                else:
                    nxt.append(solver.lower(*child, parent=box.bound))
        boxes = nxt
        if axis == "phi":
            n_phi *= 2
        else:
            n_om *= 2
    return boxes


def qubit_bound_at(s: float, lam: float, cfg: NetConfig = NetConfig(), adaptive: bool = True) -> EntropyBoundPoint:
    """Certified ``C_qubit(S) = g(t*)`` for the two-qubit problem."""
    if not 2.0 - 1e-12 <= s <= TSIRELSON + 1e-12:
        raise ValueError(f"S={s} outside [2, 2*sqrt(2)]")
    s = min(s, TSIRELSON)
    solver = _BoxSolver(lam, s, cfg)
    heap = [bx for bx in _initial_boxes(solver, cfg) if bx.bound < np.inf]
    if not heap:
        raise UnattainableError(f"S={s} unattainable")
    heapq.heapify(heap)
    upper = np.inf
    if adaptive:
        while True:
            box = heap[0]
            upper = min(upper, solver.upper(box))
            if _g(upper) - _g(box.bound) <= cfg.gap_tol or solver.n_solves >= cfg.max_solves:
                break
            if max(box.phi_hi - box.phi_lo, box.om_hi - box.om_lo) < cfg.min_width:
                break
            heapq.heappop(heap)
            for child in box.split(_choose_axis(box, cfg.lipschitz_mode)):
                c = solver.lower(*child, parent=box.bound)
                if c.bound < np.inf:
                    heapq.heappush(heap, c)
            if not heap:
                raise UnattainableError(f"S={s} unattainable")
    best = heap[0]
    t_star = max(best.bound, 0.0)
    certs = [Certificate(b.phi_lo, b.phi_hi, b.om_lo, b.om_hi, b.bound, b.gap) for b in sorted(heap)]
    gap = max(b.gap for b in heap)
    return EntropyBoundPoint(
        s=float(s),
        t_star=float(min(t_star, 1.0)),
        c_qubit=_g(t_star),
        slack_used=float(best.slack),
        t_upper=float(upper),
        gap=float(gap),
        n_solves=solver.n_solves,
        status="optimal" if gap <= GAP_TOL else "numerical_limit",
        certificates=certs,
    )


def min_over_b(phi: float, lam: float, s: float, cfg: NetConfig = NetConfig()) -> Tuple[float, List[Certificate]]:
    """Polygon relaxation over Bob directions at a fixed Alice angle.

    Each vertex ``b_k`` carries the constraint ``<F.b_k> >= S cos(pi/K)``;
    together they cover every direction on the circle.
    """
    k = cfg.b_vertices
    eps = np.pi / k
    if cfg.use_symmetry:
        centres = (np.arange(k // 4) + 0.5) * 2 * eps
    else:
        centres = (np.arange(k) + 0.5) * 2 * eps
    certs = []
    for om in centres:
        b = (np.cos(om), np.sin(om))
        sol = solve_weighted_delta_sdp(phi, b, lam, s * np.cos(eps), sense="ge", tol=cfg.sdp_tol)
        if sol.status == "infeasible":
            continue
        certs.append(Certificate(phi, phi, om - eps, om + eps, sol.dual_value, sol.gap))
    if not certs:
        raise UnattainableError(f"S={s} unattainable at phi={phi}")
    return max(min(c.bound for c in certs), 0.0), certs


# Convex envelope -------------------------------------------------------------

def lower_convex_envelope(x: Sequence[float], y: Sequence[float]) -> Tuple[np.ndarray, np.ndarray]:
    """Knots of the lower convex envelope of points sorted by strictly increasing x."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 1 or x.shape != y.shape or len(x) < 2:
        raise ValueError("need at least two (x, y) points")
    if np.any(np.diff(x) <= 0):
        raise ValueError("x values must be strictly increasing (no duplicates)")
    hull: List[int] = []
    for i in range(len(x)):
        while len(hull) >= 2:
            o, a = hull[-2], hull[-1]
            cross = (x[a] - x[o]) * (y[i] - y[o]) - (y[a] - y[o]) * (x[i] - x[o])
            if cross <= 0:
                hull.pop()
            else:
                break
        hull.append(i)
    return x[hull], y[hull]


@dataclass
class BoundCurve:
    """Grid of certified qubit bounds and their lower convex envelope."""

    lam: float
    points: List[EntropyBoundPoint]
    hull_s: np.ndarray
    hull_c: np.ndarray

    def __call__(self, s):
        """Evaluate the envelope; values below ``S = 2`` map to 0."""
        return np.interp(s, self.hull_s, self.hull_c)

    @property
    def s(self) -> np.ndarray:
        return np.array([p.s for p in self.points])

    @property
    def c_qubit(self) -> np.ndarray:
        return np.array([p.c_qubit for p in self.points])

    def rows(self) -> List[dict]:
        return [
            {
                "s": p.s,
                "t_star": p.t_star,
                "c_qubit": p.c_qubit,
                "c_hull": float(self(p.s)),
                "slack": p.slack_used,
                "gap": p.gap,
                "n_solves": p.n_solves,
                "status": p.status,
            }
            for p in self.points
        ]


def convexify_curve(points, lam: float) -> BoundCurve:
    """Lower convex envelope of ``(S, C(S))`` points, augmented with the origin.

    The origin accounts for sub-normalised mixtures: weight not placed on a
    qubit block contributes neither CHSH value nor entropy.
    """
    pts = list(points)
    if pts and not isinstance(pts[0], EntropyBoundPoint):
        pts = [EntropyBoundPoint(s=float(s), t_star=np.nan, c_qubit=float(c), slack_used=0.0) for s, c in pts]
    if len(pts) < 2:
        raise ValueError("need at least two points")
    s = np.array([p.s for p in pts])
    c = np.array([p.c_qubit for p in pts])
    if np.any(np.diff(s) <= 0):
        raise ValueError("points must be sorted by S without duplicates")
    hs, hc = lower_convex_envelope(np.concatenate([[0.0], s]), np.concatenate([[0.0], c]))
    return BoundCurve(lam=lam, points=pts, hull_s=hs, hull_c=hc)


def _bound_task(args):
    s, lam, cfg = args
    return qubit_bound_at(s, lam, cfg)


def compute_bound_curve(
    lam: float,
    cfg: NetConfig = NetConfig(),
    s_values: Optional[Sequence[float]] = None,
    workers: Optional[int] = None,
) -> BoundCurve:
    """Certified bound curve for one weight ``lam`` over a grid of CHSH values."""
    s_values = cfg.s_values if s_values is None else np.asarray(s_values, dtype=float)
    workers = default_workers() if workers is None else workers
    tasks = [(float(s), lam, cfg) for s in s_values]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            points = list(pool.map(_bound_task, tasks))
    else:
        points = [_bound_task(t) for t in tasks]
    return convexify_curve(points, lam)


# Curve library ---------------------------------------------------------------

CURVE_COLUMNS = ("lambda", "s", "t_star", "c_qubit", "slack", "gap", "n_solves", "status")


def _canonical_lambda(lam: float) -> float:
    # lam and 1 - lam give the same bound (swap Alice's two settings)
    return round(max(lam, 1.0 - lam), 10)


class CurveLibrary:
    """Bound curves keyed by ``lam``, shared read-only between analyses."""

    def __init__(self, curves: Optional[Dict[float, BoundCurve]] = None, cfg: Optional[NetConfig] = None,
                 compute_missing: bool = False):
        self._curves: Dict[float, BoundCurve] = {}
        for lam, curve in (curves or {}).items():
            self._curves[_canonical_lambda(lam)] = curve
        self.cfg = cfg or NetConfig()
        self.compute_missing = compute_missing

    @property
    def lambdas(self) -> List[float]:
        return sorted(set(self._curves) | {round(1.0 - l, 10) for l in self._curves})

    def __contains__(self, lam: float) -> bool:
        return _canonical_lambda(lam) in self._curves

    def curve(self, lam: float) -> BoundCurve:
        key = _canonical_lambda(lam)
        if key not in self._curves:
            if not self.compute_missing:
                raise KeyError(f"no bound curve for lambda={lam}")
            self._curves[key] = compute_bound_curve(key, self.cfg)
        return self._curves[key]

    def bound(self, lam: float, s: float) -> float:
        return float(self.curve(lam)(s))

    def add(self, curve: BoundCurve) -> None:
        self._curves[_canonical_lambda(curve.lam)] = curve

    # persistence
    def write_csv(self, path) -> None:
        from dataclasses import asdict

        from .io import provenance_lines, write_csv

        rows = []
        for lam in sorted(self._curves):
            for p in self._curves[lam].points:
                rows.append({"lambda": lam, "s": p.s, "t_star": p.t_star, "c_qubit": p.c_qubit,
                             "slack": p.slack_used, "gap": p.gap, "n_solves": p.n_solves, "status": p.status})
        with open(path, "w", newline="") as fh:
            write_csv(fh, CURVE_COLUMNS, rows, provenance_lines("curve-library", asdict(self.cfg)))

    @classmethod
    def read_csv(cls, source, **kwargs) -> "CurveLibrary":
        rows: Dict[float, List[EntropyBoundPoint]] = {}
        lines = (ln for ln in source if not ln.startswith("#"))
        for r in csv.DictReader(lines):
            s = float(r["s"])
            if abs(s - TSIRELSON) < 1e-8:
                s = TSIRELSON  # undo the rounding of the stored endpoint
            p = EntropyBoundPoint(
                s=s, t_star=float(r["t_star"]), c_qubit=float(r["c_qubit"]),
                slack_used=float(r["slack"]), gap=float(r["gap"]), n_solves=int(r["n_solves"]),
                status=r["status"],
            )
            rows.setdefault(float(r["lambda"]), []).append(p)
        curves = {lam: convexify_curve(sorted(pts, key=lambda p: p.s), lam) for lam, pts in rows.items()}
        return cls(curves, **kwargs)

    @classmethod
    def load(cls, path=None, **kwargs) -> "CurveLibrary":
        if path is None:
            with resources.files("diqkd").joinpath("data/bound_curves.csv").open() as fh:
                return cls.read_csv(fh, **kwargs)
        with open(path) as fh:
            return cls.read_csv(fh, **kwargs)


@lru_cache(maxsize=1)
def default_library() -> CurveLibrary:
    """Curves shipped with the package (see ``scripts/build_curves.py``)."""
    return CurveLibrary.load()


# Uncertainty sets ------------------------------------------------------------

@dataclass(frozen=True)
class HalfPlane:
    """``lam x + (1 - lam) y >= bound`` in the (H(A0|E), H(A1|E)) plane."""

    lam: float
    bound: float

    def contains(self, x: float, y: float, tol: float = 1e-12) -> bool:
        return self.lam * x + (1.0 - self.lam) * y >= self.bound - tol


@dataclass
class UncertaintyRegion:
    s: float
    half_planes: List[HalfPlane]
    boundary: np.ndarray  # (k, 2) lower-left boundary polyline

    def contains(self, x: float, y: float, tol: float = 1e-12) -> bool:
        inside_box = -tol <= x <= 1 + tol and -tol <= y <= 1 + tol
        return inside_box and all(h.contains(x, y, tol) for h in self.half_planes)


def uncertainty_region(s: float, lambda_grid: Iterable[float], library: Optional[CurveLibrary] = None) -> UncertaintyRegion:
    """Admissible entropy pairs at CHSH value ``s`` as an intersection of half-planes."""
    if not 2.0 - 1e-12 <= s <= TSIRELSON + 1e-12:
        raise ValueError(f"S={s} outside [2, 2*sqrt(2)]")
    library = library or default_library()
    planes = [HalfPlane(float(l), max(library.bound(l, s), 0.0)) for l in sorted(set(lambda_grid))]
    x_min = max([0.0] + [h.bound for h in planes if h.lam == 1.0])
    y_min = max([0.0] + [h.bound for h in planes if h.lam == 0.0])

    def y_of(x):
        vals = [y_min] + [(h.bound - h.lam * x) / (1.0 - h.lam) for h in planes if h.lam < 1.0]
        return min(max(vals), 1.0)

    # breakpoints: pairwise intersections of the sloped lines
    xs = {x_min, 1.0}
    sloped = [h for h in planes if h.lam < 1.0]
    for h1, h2 in itertools.combinations(sloped, 2):
        m1, m2 = -h1.lam / (1 - h1.lam), -h2.lam / (1 - h2.lam)
        if m1 != m2:
            a1, a2 = h1.bound / (1 - h1.lam), h2.bound / (1 - h2.lam)
            xi = (a2 - a1) / (m1 - m2)
            if x_min < xi < 1.0:
                xs.add(float(xi))
    for h in sloped:
        a, m = h.bound / (1 - h.lam), -h.lam / (1 - h.lam)
        if m != 0:
            xi = (y_min - a) / m
            if x_min < xi < 1.0:
                xs.add(float(xi))
    xs = sorted(xs)
    pts = [(x, y_of(x)) for x in xs]
    if pts[0][1] < 1.0:
        # the lambda = 1 edge runs up to y = 1, mirroring the end at x = 1
        pts.insert(0, (x_min, 1.0))
    # drop collinear interior points
    keep = [pts[0]]
    for i in range(1, len(pts) - 1):
        (x0, y0), (x1, y1), (x2, y2) = keep[-1], pts[i], pts[i + 1]
        if abs((x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0)) > 1e-12:
            keep.append(pts[i])
    if len(pts) > 1:
        keep.append(pts[-1])
    return UncertaintyRegion(s=float(s), half_planes=planes, boundary=np.array(keep))
