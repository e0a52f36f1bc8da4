"""
States, CHSH values and the refined Pinsker bound
=================================================

The singlet reaches the Tsirelson value. Mixing it with white noise lowers
the CHSH value and raises the bit error rate along a straight line.
"""
# %%
import numpy as np

from diqkd import MeasurementFrame, chsh_value, depolarizing_qber, singlet, werner_state
from diqkd.entropy import conditional_entropy_oracle, delta_trace_norm, pinching, refined_pinsker, relative_entropy

frame = MeasurementFrame()
print("singlet S =", chsh_value(singlet(), frame))
for v in (1.0, 0.9, 0.85, 0.8):
    s = chsh_value(werner_state(v), frame)
    print(f"v={v:.2f}  S={s:.4f}  Q={depolarizing_qber(s):.4f}")

# %%
# Pinching Alice's qubit in her key basis and comparing with the original
# state gives the entropy Eve cannot touch. The trace distance of the
# disturbance already lower-bounds that entropy.
rng = np.random.default_rng(0)
for _ in range(5):
    g = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    rho = g @ g.conj().T
    rho /= np.trace(rho).real
    phi = rng.uniform(0, np.pi / 2)
    d = relative_entropy(rho, pinching(rho, phi))
    print(f"D = {d:.4f}   g(delta) = {refined_pinsker(delta_trace_norm(rho, phi)):.4f}")

# %%
# The |+> state is the equality case: one full bit, with maximal disturbance.
plus = np.kron(np.full((2, 2), 0.5), np.diag([1.0, 0.0]))
print("|+> :", relative_entropy(plus, pinching(plus, 0.0)), refined_pinsker(delta_trace_norm(plus, 0.0)))

# %%
# For the singlet both of Alice's bases are fully random to Eve.
print("singlet weighted entropy:", conditional_entropy_oracle(singlet(), np.pi / 2, 0.5))
