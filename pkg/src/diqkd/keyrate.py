"""Secret fractions, asymptotic key rates, basis-bias optimisation and thresholds.

Alice picks ``X = 0`` with probability ``p`` and Bob mirrors her bias on the
key rounds, so a round is kept with probability ``p_s = p^2 + (1 - p)^2`` and
a kept round used basis 0 with probability ``lam = p^2 / p_s``.  The
asymptotic rate per round is

    K = p_s * (C_lam(S) - lam h(Q00) - (1 - lam) h(Q11)).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import bisect

from .bounds import CurveLibrary, default_library
from .entropy import binary_entropy
from .quantum import TSIRELSON, ChannelPoint, depolarizing_qber

DEFAULT_LAMBDA_GRID = tuple(np.round(np.linspace(0.0, 1.0, 21), 10))


def lambda_from_p(p: float) -> float:
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    return p * p / (p * p + (1.0 - p) ** 2)


def p_from_lambda(lam: float) -> float:
    """Inverse of :func:`lambda_from_p` on ``[0, 1]``."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lambda must lie in [0, 1]")
    a, b = np.sqrt(lam), np.sqrt(1.0 - lam)
    return float(a / (a + b))


def sifting_probability(p: float) -> float:
    return p * p + (1.0 - p) ** 2


@dataclass(frozen=True)
class KeyRateInputs:
    p: float
    lam: float
    p_s: float
    channel: ChannelPoint

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0 or not 0.0 <= self.lam <= 1.0:
            raise ValueError("p and lambda must lie in [0, 1]")
        if abs(self.lam - lambda_from_p(self.p)) > 1e-12:
            raise ValueError("lambda inconsistent with p")
        if abs(self.p_s - sifting_probability(self.p)) > 1e-12:
            raise ValueError("p_s inconsistent with p")

    @classmethod
    def from_p(cls, p: float, channel: ChannelPoint) -> "KeyRateInputs":
        return cls(p, lambda_from_p(p), sifting_probability(p), channel)

    @classmethod
    def from_lambda(cls, lam: float, channel: ChannelPoint) -> "KeyRateInputs":
        p = p_from_lambda(lam)
        return cls(p, lambda_from_p(p), sifting_probability(p), channel)


def secret_fraction(inputs: KeyRateInputs, c_star: float) -> float:
    """``c_star - lam h(q00) - (1 - lam) h(q11)``; may be negative."""
    if not -1e-12 <= c_star <= 1.0 + 1e-12:
        raise ValueError("c_star must lie in [0, 1]")
    ch = inputs.channel
    return float(c_star - inputs.lam * binary_entropy(ch.q00) - (1.0 - inputs.lam) * binary_entropy(ch.q11))


def key_rate(inputs: KeyRateInputs, c_star: float) -> float:
    return inputs.p_s * secret_fraction(inputs, c_star)


def analytic_single_basis_bound(s):
    """Closed-form ``H(A0|E)`` bound for one key basis: ``1 - h(1/2 + sqrt(S^2/4 - 1)/2)``."""
    s = np.asarray(s, dtype=float)
    x = 0.5 + 0.5 * np.sqrt(np.clip(s * s / 4.0 - 1.0, 0.0, 1.0))
    return 1.0 - binary_entropy(np.clip(x, 0.0, 1.0))


def rate_at(channel: ChannelPoint, lam: float, library: Optional[CurveLibrary] = None) -> float:
    """Unclamped rate of the protocol with weight ``lam`` at a channel point."""
    library = library or default_library()
    inputs = KeyRateInputs.from_lambda(lam, channel)
    return key_rate(inputs, min(max(library.bound(lam, channel.s), 0.0), 1.0))


@dataclass(frozen=True)
class BiasChoice:
    best_lambda: float
    best_rate: float


def optimize_basis_bias(
    channel: ChannelPoint,
    lambda_grid: Sequence[float] = DEFAULT_LAMBDA_GRID,
    library: Optional[CurveLibrary] = None,
) -> BiasChoice:
    """Grid argmax of the unclamped rate; ties go to the larger ``lam``."""
    grid = sorted(set(float(l) for l in lambda_grid) | {0.5, 1.0})
    best = BiasChoice(np.nan, -np.inf)
    for lam in grid:
        r = rate_at(channel, lam, library)
        if r >= best.best_rate - 1e-12:
            best = BiasChoice(lam, r)
    return best


def depolarizing_secret_fraction(s: float, lam: float, library: Optional[CurveLibrary] = None) -> float:
    channel = ChannelPoint.depolarizing(s)
    return secret_fraction(KeyRateInputs.from_lambda(lam, channel), (library or default_library()).bound(lam, s))


def critical_chsh(lam: float, library: Optional[CurveLibrary] = None, xtol: float = 1e-5) -> float:
    """Smallest CHSH value with a nonnegative secret fraction under depolarising noise."""
    library = library or default_library()
    f = lambda s: depolarizing_secret_fraction(s, lam, library)
    lo, hi = 2.0, TSIRELSON
    if f(lo) * f(hi) > 0:
        raise ValueError(f"no sign change of the secret fraction for lambda={lam}")
    return float(bisect(f, lo, hi, xtol=xtol))


def critical_qber(lam: float, library: Optional[CurveLibrary] = None) -> float:
    return depolarizing_qber(critical_chsh(lam, library))


@dataclass
class FeasibilityGrid:
    s: np.ndarray
    qber: np.ndarray
    best_lambda: np.ndarray  # shape (len(qber), len(s))
    key_rate: np.ndarray  # clamped at 0
    contour: np.ndarray  # (k, 2) points (S, Q) of the zero-rate boundary

    def rows(self) -> List[dict]:
        out = []
        for i, q in enumerate(self.qber):
            for j, s in enumerate(self.s):
                out.append({"S": s, "qber": q, "best_lambda": self.best_lambda[i, j], "key_rate": self.key_rate[i, j]})
        return out


def _optimized_rate(s, q, lambda_grid, library):
    return optimize_basis_bias(ChannelPoint(s, q, q), lambda_grid, library)


def feasibility_grid(
    s_range: Tuple[float, float] = (2.0, TSIRELSON),
    q_range: Tuple[float, float] = (0.0, 0.15),
    resolution: Tuple[int, int] = (41, 31),
    lambda_grid: Sequence[float] = DEFAULT_LAMBDA_GRID,
    library: Optional[CurveLibrary] = None,
) -> FeasibilityGrid:
    """Lambda-optimised key rate over a rectangular (S, Q) grid."""
    library = library or default_library()
    s_vals = np.linspace(*s_range, resolution[0])
    q_vals = np.linspace(*q_range, resolution[1])
    if s_vals[0] < 2.0 - 1e-12 or s_vals[-1] > TSIRELSON + 1e-12 or q_vals[0] < 0 or q_vals[-1] > 0.5:
        raise ValueError("grid outside S in [2, 2 sqrt 2], Q in [0, 1/2]")
    lam = np.empty((len(q_vals), len(s_vals)))
    rate = np.empty_like(lam)
    for i, q in enumerate(q_vals):
        for j, s in enumerate(s_vals):
            choice = _optimized_rate(min(s, TSIRELSON), q, lambda_grid, library)
            lam[i, j], rate[i, j] = choice.best_lambda, max(choice.best_rate, 0.0)
    contour = []
    for q in q_vals:
        f = lambda s: _optimized_rate(s, q, lambda_grid, library).best_rate
        lo, hi = max(s_range[0], 2.0), min(s_range[1], TSIRELSON)
        if f(lo) < 0 < f(hi):
            contour.append((bisect(f, lo, hi, xtol=1e-5), q))
    return FeasibilityGrid(s_vals, q_vals, lam, rate, np.array(contour).reshape(-1, 2))


@dataclass(frozen=True)
class ExperimentRecord:
    label: str
    year: int
    s: float
    qber: float
    source: str = ""

    def __post_init__(self):
        if not (2.0 <= self.s <= TSIRELSON + 1e-9):
            raise ValueError("S out of [2, 2√2]")
        if not 0.0 <= self.qber <= 0.5:
            raise ValueError("qber out of [0, 1/2]")


@dataclass(frozen=True)
class ExperimentRate:
    label: str
    rate: float
    best_lambda: float
    error: str = ""


def evaluate_experiments(
    records: Sequence[ExperimentRecord],
    lambda_grid: Sequence[float] = DEFAULT_LAMBDA_GRID,
    library: Optional[CurveLibrary] = None,
) -> List[ExperimentRate]:
    """Lambda-optimised rate for each record, floored at zero."""
    out = []
    for rec in records:
        try:
            choice = optimize_basis_bias(ChannelPoint(min(rec.s, TSIRELSON), rec.qber, rec.qber), lambda_grid, library)
            out.append(ExperimentRate(rec.label, max(choice.best_rate, 0.0), choice.best_lambda))
        except (ValueError, KeyError) as exc:
            out.append(ExperimentRate(rec.label, np.nan, np.nan, str(exc)))
    return out
