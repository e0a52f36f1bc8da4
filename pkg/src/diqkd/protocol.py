"""Monte-Carlo simulation of the two-basis DIQKD protocol with honest devices.

Randomness is counter based: every purpose (round sampling, hashing keys,
Toeplitz seeds) has its own Philox key derived from ``(seed, tag)``, and
round ``r`` reads the four 64-bit words of counter block ``r``.  Any subset
of rounds can therefore be regenerated independently of the others.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Dict, Optional, TextIO, Tuple

import numpy as np
from scipy.signal import fftconvolve

from .bounds import CurveLibrary, default_library
from .entropy import binary_entropy
from .keyrate import lambda_from_p, sifting_probability
from .quantum import TSIRELSON, MeasurementFrame, check_density_matrix, projector, singlet

TAG_ROUNDS = 1
TAG_HASH = 2
TAG_TOEPLITZ = 3
MERSENNE_127 = (1 << 127) - 1

KEEP_KEY, KEEP_PE, KEEP_DISCARD = "key", "pe", "discard"


@dataclass(frozen=True)
class ProtocolConfig:
    n: int = 100_000
    p: float = 0.5
    q: float = 0.95
    state: np.ndarray = field(default_factory=singlet, repr=False, compare=False)
    frame: MeasurementFrame = field(default_factory=MeasurementFrame)
    s_tol: float = 2.7
    ec_efficiency: float = 1.1
    verify_bits: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be positive")
        if not (0.0 <= self.p <= 1.0 and 0.0 <= self.q <= 1.0):
            raise ValueError("p and q must lie in [0, 1]")
        if not 2.0 <= self.s_tol <= TSIRELSON:
            raise ValueError("s_tol must lie in [2, 2 sqrt 2]")
        if self.ec_efficiency < 1.0:
            raise ValueError("ec_efficiency must be at least 1")
        if not 1 <= self.verify_bits <= 127:
            raise ValueError("verify_bits must lie in [1, 127]")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        check_density_matrix(self.state)

    @property
    def lam(self) -> float:
        return lambda_from_p(self.p)


@dataclass
class Transcript:
    x: np.ndarray
    y: np.ndarray
    a: np.ndarray
    b: np.ndarray

    def __len__(self):
        return len(self.x)

    @property
    def kept_as(self) -> np.ndarray:
        out = np.full(len(self.x), KEEP_DISCARD, dtype=object)
        out[(self.y < 2) & (self.x == self.y)] = KEEP_KEY
        out[self.y >= 2] = KEEP_PE
        return out

    def write_csv(self, fh: TextIO) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["round", "x", "y", "a", "b", "kept_as"])
        for row in zip(range(len(self.x)), self.x, self.y, self.a, self.b, self.kept_as):
            w.writerow(row)


@dataclass
class Sifted:
    raw_a: np.ndarray
    raw_b: np.ndarray
    key_basis: np.ndarray
    pe_x: np.ndarray
    pe_y: np.ndarray
    pe_a: np.ndarray
    pe_b: np.ndarray


@dataclass
class ProtocolResult:
    raw_key_length: int
    pe_count: int
    s_hat: float
    aborted: bool
    abort_reason: str
    leak_ec: int
    final_key_a: np.ndarray
    final_key_b: np.ndarray
    empirical_rate: float
    lambda_hat: float = float("nan")
    q_hat: Tuple[float, float] = (float("nan"), float("nan"))
    verified: bool = False

    def summary(self) -> Dict:
        return {
            "raw_key_length": self.raw_key_length,
            "pe_count": self.pe_count,
            "s_hat": self.s_hat,
            "aborted": self.aborted,
            "abort_reason": self.abort_reason,
            "leak_ec": self.leak_ec,
            "final_key_length": int(len(self.final_key_a)),
            "final_key_a": _bits_to_hex(self.final_key_a),
            "final_key_b": _bits_to_hex(self.final_key_b),
            "empirical_rate": self.empirical_rate,
            "lambda_hat": self.lambda_hat,
            "q_hat_00": self.q_hat[0],
            "q_hat_11": self.q_hat[1],
            "verified": self.verified,
        }


def _bits_to_hex(bits: np.ndarray) -> str:
    return np.packbits(np.asarray(bits, dtype=np.uint8)).tobytes().hex()


# Randomness ------------------------------------------------------------------

def _words(seed: int, tag: int, start: int, count: int) -> np.ndarray:
    """Words of counter blocks ``start .. start+count-1``; shape ``(count, 4)``."""
    gen = np.random.Philox(key=[seed, tag], counter=[start, 0, 0, 0])
    return gen.random_raw(4 * count).reshape(count, 4)


def _uniform(words: np.ndarray) -> np.ndarray:
    return (words >> np.uint64(11)).astype(np.float64) * 2.0**-53


def _stream_bits(seed: int, tag: int, n_bits: int) -> np.ndarray:
    n_blocks = max(1, -(-n_bits // 256))
    raw = _words(seed, tag, 0, n_blocks).ravel()
    return np.unpackbits(raw.view(np.uint8))[:n_bits]


# Step 1: measurements --------------------------------------------------------

def outcome_table(state: np.ndarray, frame: MeasurementFrame) -> np.ndarray:
    """``P[x, y, 2a + b]`` with bit 0 for the +1 outcome."""
    angles_a = (0.0, frame.phi)
    b0, b1 = frame.bob_key_angles or (np.pi, frame.phi + np.pi)
    angles_b = (b0, b1, -frame.omega, frame.omega)
    table = np.empty((2, 4, 4))
    for x, ta in enumerate(angles_a):
        pa = (projector(ta), projector(ta + np.pi))
        for y, tb in enumerate(angles_b):
            pb = (projector(tb), projector(tb + np.pi))
            for a in range(2):
                for b in range(2):
                    table[x, y, 2 * a + b] = np.trace(state @ np.kron(pa[a], pb[b])).real
    table = np.clip(table, 0.0, None)
    return table / table.sum(axis=2, keepdims=True)


def sample_rounds(config: ProtocolConfig, start: int = 0, count: Optional[int] = None) -> Transcript:
    """Inputs and outcomes of rounds ``start .. start+count-1``."""
    count = config.n - start if count is None else count
    u = _uniform(_words(config.seed, TAG_ROUNDS, start, count))
    p, q = config.p, config.q
    x = (u[:, 0] >= p).astype(np.int8)
    y_cdf = np.array([q * p, q, q + (1.0 - q) / 2.0])
    y = np.searchsorted(y_cdf, u[:, 1], side="right").astype(np.int8)
    cdf = np.cumsum(outcome_table(config.state, config.frame), axis=2)[x, y]
    ab = np.minimum((u[:, 2:3] >= cdf).sum(axis=1), 3)
    return Transcript(x, y, (ab >> 1).astype(np.int8), (ab & 1).astype(np.int8))


def sample_round(config: ProtocolConfig, round_index: int) -> Dict[str, int]:
    t = sample_rounds(config, round_index, 1)
    return {"x": int(t.x[0]), "y": int(t.y[0]), "a": int(t.a[0]), "b": int(t.b[0])}


# Steps 2 and 3: sifting and estimation ----------------------------------------

def sift(t: Transcript) -> Sifted:
    key = (t.y < 2) & (t.x == t.y)
    pe = t.y >= 2
    return Sifted(
        raw_a=t.a[key].astype(np.uint8),
        raw_b=t.b[key].astype(np.uint8),
        key_basis=t.x[key],
        pe_x=t.x[pe], pe_y=t.y[pe], pe_a=t.a[pe], pe_b=t.b[pe],
    )


class InsufficientStatistics(ValueError):
    pass


def estimate_chsh(s: Sifted) -> float:
    """``max{2, C12 - C02 - C03 - C13}`` from the parameter-estimation rounds."""
    corr = {}
    for x in (0, 1):
        for y in (2, 3):
            cell = (s.pe_x == x) & (s.pe_y == y)
            if not cell.any():
                raise InsufficientStatistics("insufficient statistics")
            corr[x, y] = np.mean(1.0 - 2.0 * (s.pe_a[cell] ^ s.pe_b[cell]))
    return max(2.0, corr[1, 2] - corr[0, 2] - corr[0, 3] - corr[1, 3])


# Step 4: error correction and verification ------------------------------------

def basis_statistics(raw_a, raw_b, basis) -> Tuple[float, Tuple[float, float]]:
    """Fraction of basis-0 key rounds and the QBER in each basis."""
    n = len(raw_a)
    if n == 0:
        return float("nan"), (0.0, 0.0)
    err = raw_a != raw_b
    qs = []
    for x in (0, 1):
        m = basis == x
        qs.append(float(err[m].mean()) if m.any() else 0.0)
    return float(np.mean(basis == 0)), (qs[0], qs[1])


def ec_leak(n_key: int, lam_hat: float, q_hat: Tuple[float, float], efficiency: float) -> int:
    if n_key == 0:
        return 0
    info = lam_hat * binary_entropy(q_hat[0]) + (1.0 - lam_hat) * binary_entropy(q_hat[1])
    return int(math.ceil(efficiency * n_key * info - 1e-9))


def polynomial_hash(bits: np.ndarray, key: int, n_out: int) -> int:
    """Evaluation hash over GF(2^127 - 1) of 64-bit message blocks, truncated."""
    bits = np.asarray(bits, dtype=np.uint8)
    pad = (-len(bits)) % 64
    blocks = np.packbits(np.concatenate([bits, np.zeros(pad, np.uint8)])).view(">u8")
    acc = len(bits)  # length prefix separates messages differing only in padding
    for m in blocks.tolist():
        acc = (acc * key + m) % MERSENNE_127
    return acc & ((1 << n_out) - 1)


def hash_key(seed: int, nonce: int = 0) -> int:
    w = _words(seed, TAG_HASH, nonce, 1)[0]
    return (int(w[0]) << 63 | int(w[1]) >> 1) % MERSENNE_127


def verify_keys(key_a, key_b, verify_bits: int, seed: int) -> bool:
    k = hash_key(seed)
    return polynomial_hash(key_a, k, verify_bits) == polynomial_hash(key_b, k, verify_bits)


@dataclass
class EcOutcome:
    corrected_b: np.ndarray
    leak_ec: int
    verified: bool


def error_correct_and_verify(raw_a, raw_b, lam_hat: float, q_hat: Tuple[float, float], config: ProtocolConfig) -> EcOutcome:
    """Leak-accounted reconciliation followed by hash verification.

    The decoder is abstract: once Alice has disclosed at least the Shannon
    limit ``n (lam h(q0) + (1 - lam) h(q1))`` Bob recovers her key; with less he
    keeps his own bits and verification catches the mismatch.
    """
    if len(raw_a) != len(raw_b):
        raise ValueError("raw keys differ in length")
    n = len(raw_a)
    leak = ec_leak(n, lam_hat, q_hat, config.ec_efficiency)
    needed = n * (lam_hat * binary_entropy(q_hat[0]) + (1 - lam_hat) * binary_entropy(q_hat[1])) if n else 0.0
    corrected = np.array(raw_a, copy=True) if leak >= needed else np.array(raw_b, copy=True)
    ok = verify_keys(raw_a, corrected, config.verify_bits, config.seed)
    return EcOutcome(corrected, leak, ok)


# Step 5: privacy amplification ----------------------------------------------

def final_key_length(n_key: int, c_star: float, lam_hat: float, q_hat, verify_bits: int) -> int:
    r = c_star - lam_hat * binary_entropy(q_hat[0]) - (1.0 - lam_hat) * binary_entropy(q_hat[1])
    return max(int(math.floor(n_key * r)) - verify_bits, 0)


def toeplitz_hash(key: np.ndarray, length: int, seed: int) -> np.ndarray:
    """``T key mod 2`` for a random binary Toeplitz matrix of shape ``(length, n)``."""
    n = len(key)
    if length <= 0 or n == 0:
        return np.zeros(0, dtype=np.uint8)
    diag = _stream_bits(seed, TAG_TOEPLITZ, n + length - 1).astype(np.float64)
    # row i is diag[i : i + n] reversed, so out_i = sum_j diag[i + n - 1 - j] key_j
    full = fftconvolve(diag, np.asarray(key, dtype=np.float64))
    return (np.rint(full[n - 1:n - 1 + length]).astype(np.int64) & 1).astype(np.uint8)


def privacy_amplify(key: np.ndarray, length: int, config: ProtocolConfig) -> np.ndarray:
    return toeplitz_hash(key, length, config.seed)


# Full run ------------------------------------------------------------------

def _aborted(t_len, s: Optional[Sifted], s_hat: float, reason: str, leak: int = 0, **kw) -> ProtocolResult:
    empty = np.zeros(0, dtype=np.uint8)
    return ProtocolResult(
        raw_key_length=0 if s is None else len(s.raw_a),
        pe_count=0 if s is None else len(s.pe_x),
        s_hat=s_hat, aborted=True, abort_reason=reason, leak_ec=leak,
        final_key_a=empty, final_key_b=empty, empirical_rate=0.0, **kw,
    )


def run_protocol(config: ProtocolConfig, library: Optional[CurveLibrary] = None,
                 transcript: Optional[Transcript] = None) -> ProtocolResult:
    library = library or default_library()
    t = transcript if transcript is not None else sample_rounds(config)
    s = sift(t)
    try:
        s_hat = estimate_chsh(s)
    except InsufficientStatistics as exc:
        return _aborted(len(t), s, float("nan"), str(exc))
    if s_hat <= config.s_tol:
        return _aborted(len(t), s, s_hat, "CHSH below threshold")
    lam_hat, q_hat = basis_statistics(s.raw_a, s.raw_b, s.key_basis)
    if len(s.raw_a) == 0:
        return _aborted(len(t), s, s_hat, "empty raw key")
    ec = error_correct_and_verify(s.raw_a, s.raw_b, lam_hat, q_hat, config)
    if not ec.verified:
        return _aborted(len(t), s, s_hat, "EC failure", ec.leak_ec, lambda_hat=lam_hat, q_hat=q_hat)
    c_star = library.bound(config.lam, config.s_tol)
    length = final_key_length(len(s.raw_a), c_star, lam_hat, q_hat, config.verify_bits)
    key_a = privacy_amplify(s.raw_a, length, config)
    key_b = privacy_amplify(ec.corrected_b, length, config)
    return ProtocolResult(
        raw_key_length=len(s.raw_a), pe_count=len(s.pe_x), s_hat=s_hat, aborted=False, abort_reason="",
        leak_ec=ec.leak_ec, final_key_a=key_a, final_key_b=key_b, empirical_rate=len(key_a) / config.n,
        lambda_hat=lam_hat, q_hat=q_hat, verified=True,
    )


def asymptotic_prediction(config: ProtocolConfig, library: Optional[CurveLibrary] = None) -> float:
    """Expected final-key bits per round: ``q p_s (C*(S_tol) - lam h(Q00) - (1 - lam) h(Q11))``.

    QBERs are those of the configured state and frame.
    """
    library = library or default_library()
    table = outcome_table(config.state, config.frame)
    q00 = table[0, 0, 1] + table[0, 0, 2]
    q11 = table[1, 1, 1] + table[1, 1, 2]
    lam = config.lam
    r = library.bound(lam, config.s_tol) - lam * binary_entropy(q00) - (1 - lam) * binary_entropy(q11)
    return config.q * sifting_probability(config.p) * max(r, 0.0)
