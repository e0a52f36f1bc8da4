import io
import json
import math

import numpy as np
import pytest
from scipy.linalg import toeplitz

from diqkd.entropy import binary_entropy
from diqkd.protocol import (
    ProtocolConfig,
    Sifted,
    _stream_bits,
    TAG_TOEPLITZ,
    asymptotic_prediction,
    ec_leak,
    error_correct_and_verify,
    estimate_chsh,
    final_key_length,
    privacy_amplify,
    run_protocol,
    sample_round,
    sample_rounds,
    sift,
    toeplitz_hash,
    verify_keys,
)
from diqkd.quantum import TSIRELSON, werner_state


def test_config_validation():
    with pytest.raises(ValueError):
        ProtocolConfig(n=0)
    with pytest.raises(ValueError):
        ProtocolConfig(p=1.5)
    with pytest.raises(ValueError):
        ProtocolConfig(s_tol=1.9)
    with pytest.raises(ValueError):
        ProtocolConfig(ec_efficiency=0.9)
    with pytest.raises(ValueError):
        ProtocolConfig(state=np.eye(4))


def test_rounds_are_addressable_by_index():
    cfg = ProtocolConfig(n=1000, seed=42)
    batch = sample_rounds(cfg)
    for r in (0, 1, 517, 999):
        one = sample_round(cfg, r)
        assert one == {"x": batch.x[r], "y": batch.y[r], "a": batch.a[r], "b": batch.b[r]}
    part = sample_rounds(cfg, 300, 50)
    assert np.array_equal(part.a, batch.a[300:350])
    other = sample_rounds(ProtocolConfig(n=1000, seed=43))
    assert not np.array_equal(other.x, batch.x)


def test_input_distribution():
    n, p, q = 100_000, 0.3, 0.8
    t = sample_rounds(ProtocolConfig(n=n, p=p, q=q, seed=1))
    expect = {0: q * p, 1: q * (1 - p), 2: (1 - q) / 2, 3: (1 - q) / 2}
    assert abs(np.mean(t.x == 0) - p) <= 3 * math.sqrt(p * (1 - p) / n)
    for y, py in expect.items():
        assert abs(np.mean(t.y == y) - py) <= 3 * math.sqrt(py * (1 - py) / n)


def test_singlet_key_rounds_agree():
    t = sample_rounds(ProtocolConfig(n=20_000, seed=3))
    key = (t.y < 2) & (t.x == t.y)
    assert key.sum() > 1000
    assert np.array_equal(t.a[key], t.b[key])


def _chsh_sigma(v, n_cell):
    c = v / math.sqrt(2)
    return math.sqrt(4 * (1 - c * c) / n_cell)


@pytest.mark.parametrize("v", [1.0, 0.85, 0.8])
def test_chsh_estimate(v):
    n, q = 200_000, 0.5
    s = estimate_chsh(sift(sample_rounds(ProtocolConfig(n=n, q=q, state=werner_state(v), seed=11))))
    sigma = _chsh_sigma(v, n * (1 - q) / 4)
    assert abs(s - v * TSIRELSON) <= 3 * sigma + 1e-12


def test_uncorrelated_state_floors_at_two():
    s = estimate_chsh(sift(sample_rounds(ProtocolConfig(n=20_000, q=0.5, state=werner_state(0.0), seed=2))))
    assert s == 2.0


def test_sifting_sizes():
    n, p, q = 100_000, 0.5, 0.9
    s = sift(sample_rounds(ProtocolConfig(n=n, p=p, q=q, seed=5)))
    mean = q * (p * p + (1 - p) ** 2) * n
    assert abs(len(s.raw_a) - mean) <= 3 * math.sqrt(mean)
    assert abs(len(s.pe_x) - (1 - q) * n) <= 3 * math.sqrt((1 - q) * q * n)


def test_sifting_sizes_over_seeds():
    n, p, q = 20_000, 0.4, 0.7
    ps = p * p + (1 - p) ** 2
    for seed in range(10):
        s = sift(sample_rounds(ProtocolConfig(n=n, p=p, q=q, seed=seed)))
        assert abs(len(s.raw_a) - q * ps * n) <= 4 * math.sqrt(n * q * ps * (1 - q * ps))
        assert abs(len(s.pe_x) - (1 - q) * n) <= 4 * math.sqrt(n * q * (1 - q))


def test_sift_keeps_only_matching_key_bases():
    t = sample_rounds(ProtocolConfig(n=5000, seed=8))
    kept = t.kept_as
    assert np.all(t.x[kept == "key"] == t.y[kept == "key"])
    assert np.all(t.y[kept == "pe"] >= 2)
    assert np.all((t.x[kept == "discard"] != t.y[kept == "discard"]) & (t.y[kept == "discard"] < 2))


def test_no_test_rounds_aborts(library):
    res = run_protocol(ProtocolConfig(n=5000, q=1.0, seed=1), library)
    assert res.aborted and res.abort_reason == "insufficient statistics"


def test_leak_examples():
    assert ec_leak(10_000, 0.5, (0.0, 0.0), 1.1) == 0
    assert ec_leak(10_000, 0.5, (0.05, 0.05), 1.1) == math.ceil(1.1e4 * binary_entropy(0.05))
    assert binary_entropy(0.05) == pytest.approx(0.28640, abs=1e-5)


def test_error_correction_zero_errors():
    cfg = ProtocolConfig(seed=9)
    key = np.random.default_rng(0).integers(0, 2, 1000).astype(np.uint8)
    out = error_correct_and_verify(key, key.copy(), 0.5, (0.0, 0.0), cfg)
    assert out.leak_ec == 0 and out.verified and np.array_equal(out.corrected_b, key)


def test_verification_catches_mismatches():
    rng = np.random.default_rng(4)
    key = rng.integers(0, 2, 5000).astype(np.uint8)
    for seed in range(200):
        bad = key.copy()
        bad[rng.integers(0, len(key), rng.integers(1, 20))] ^= 1
        if np.array_equal(bad, key):
            continue
        assert not verify_keys(key, bad, 64, seed)
    assert verify_keys(key, key.copy(), 64, 7)


def test_final_length_clamps():
    assert final_key_length(1000, 0.1, 0.5, (0.2, 0.2), 64) == 0
    assert final_key_length(10_000, 1.0, 0.5, (0.0, 0.0), 64) == 10_000 - 64


def test_toeplitz_matches_explicit_matrix():
    rng = np.random.default_rng(6)
    key = rng.integers(0, 2, 300).astype(np.uint8)
    out = toeplitz_hash(key, 120, seed=5)
    diag = _stream_bits(5, TAG_TOEPLITZ, 300 + 120 - 1).astype(int)
    # row i, column j holds diag[i - j + n - 1]
    t = toeplitz(diag[299:299 + 120], diag[299::-1])
    assert np.array_equal(out, (t @ key) % 2)
    assert toeplitz_hash(key, 0, seed=5).size == 0


def test_privacy_amplification_is_deterministic():
    key = np.random.default_rng(1).integers(0, 2, 2000).astype(np.uint8)
    cfg = ProtocolConfig(seed=77)
    assert np.array_equal(privacy_amplify(key, 500, cfg), privacy_amplify(key, 500, cfg))
    assert not np.array_equal(privacy_amplify(key, 500, cfg), privacy_amplify(key, 500, ProtocolConfig(seed=78)))


def test_below_threshold_always_aborts(library):
    for seed in range(5):
        res = run_protocol(ProtocolConfig(n=20_000, state=werner_state(0.9), s_tol=2.7, seed=seed), library)
        assert res.aborted and res.abort_reason == "CHSH below threshold"
        assert res.final_key_a.size == 0


def test_successful_run_has_identical_keys(library):
    cfg = ProtocolConfig(n=100_000, p=0.5, q=0.9, state=werner_state(0.97), s_tol=2.6, seed=12)
    res = run_protocol(cfg, library)
    assert not res.aborted and res.verified
    assert np.array_equal(res.final_key_a, res.final_key_b)
    assert res.empirical_rate == len(res.final_key_a) / cfg.n
    again = run_protocol(cfg, library)
    assert np.array_equal(again.final_key_a, res.final_key_a)


def test_rate_converges_with_rounds(library):
    def mean_deviation(n, seeds):
        devs = []
        for seed in seeds:
            cfg = ProtocolConfig(n=n, seed=seed)
            devs.append(abs(run_protocol(cfg, library).empirical_rate / asymptotic_prediction(cfg, library) - 1))
        return np.mean(devs)

    d = [mean_deviation(10_000, range(8)), mean_deviation(100_000, range(4)), mean_deviation(1_000_000, range(2))]
    assert d[0] > d[1] > d[2]


def test_transcript_and_summary_formats(library):
    cfg = ProtocolConfig(n=200, seed=3, s_tol=2.0)
    t = sample_rounds(cfg)
    buf = io.StringIO()
    t.write_csv(buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "round,x,y,a,b,kept_as"
    assert len(lines) == 201
    assert lines[1].split(",")[0] == "0"
    summary = run_protocol(cfg, library, t).summary()
    json.dumps(summary)
    for key in ("raw_key_length", "pe_count", "s_hat", "aborted", "leak_ec", "final_key_a", "final_key_b", "empirical_rate"):
        assert key in summary
