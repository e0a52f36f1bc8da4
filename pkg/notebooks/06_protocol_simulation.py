"""
Running the protocol
====================

A Monte-Carlo run draws inputs and outcomes from a two-qubit state, sifts,
estimates S, reconciles and hashes. The finite run approaches the
asymptotic rate as the number of rounds grows.
"""
# %%
import numpy as np

from diqkd import ProtocolConfig, run_protocol, singlet, werner_state
from diqkd.protocol import asymptotic_prediction

for n in (10_000, 100_000, 400_000):
    cfg = ProtocolConfig(n=n, state=singlet(), s_tol=2.7, seed=1)
    res = run_protocol(cfg)
    print(f"N={n:>7}  S_hat={res.s_hat:.4f}  key bits={len(res.final_key_a):>6}  "
          f"rate={res.empirical_rate:.4f}  predicted={asymptotic_prediction(cfg):.4f}")

# %%
# Noisy states abort when the estimate misses the threshold.
res = run_protocol(ProtocolConfig(n=100_000, state=werner_state(0.7), s_tol=2.7))
print("werner(0.7):", res.abort_reason, f"(S_hat={res.s_hat:.3f})")

# %%
# A milder noise level with a lower threshold still gives matching keys.
res = run_protocol(ProtocolConfig(n=200_000, state=werner_state(0.97), s_tol=2.6, q=0.9))
print("werner(0.97): keys equal =", np.array_equal(res.final_key_a, res.final_key_b),
      "leak =", res.leak_ec, "length =", len(res.final_key_a))
