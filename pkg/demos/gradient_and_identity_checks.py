"""Numerical self-checks: tape gradients vs central differences, the
exact information chain-rule identity on discrete joints, and the
analytic loss values.

Run:  python demos/gradient_and_identity_checks.py
"""
import numpy as np

import dytag.autodiff as ad
from dytag import DiscreteJoint, mi_chain_check
from dytag.autodiff import Param, Tape

# --- reverse-mode gradients vs finite differences -----------------------
rng = np.random.default_rng(0)
w1 = Param("w1", rng.standard_normal((4, 8)) * 0.3)
w2 = Param("w2", rng.standard_normal((8, 1)) * 0.3)
x = ad.constant(rng.standard_normal((16, 4)))


def loss_fn():
    h = ad.relu(ad.matmul(x, w1.value))
    return ad.tsum(ad.square(ad.matmul(h, w2.value)))


err = ad.finite_diff_check(loss_fn, [w1, w2])
print(f"two-layer net: max relative gradient error = {err:.2e}")

# --- the fusion identity the additive design relies on ------------------
# I((Zs, Zpi); Y) = I(Zs; Y) + I(Zpi; Y | Zs), checked by enumeration.
# XOR makes the structural part alone useless and the fused part carry
# exactly one bit.
xor_table = np.zeros((2, 2, 2))
for i in range(2):
    for j in range(2):
        xor_table[i, j, i ^ j] = 0.25
lhs, rhs, cond = mi_chain_check(DiscreteJoint(xor_table))
print(f"XOR joint: I(joint;Y)={lhs:.6f}  I(Zs;Y)+I(Zpi;Y|Zs)={rhs:.6f}  "
      f"conditional={cond:.6f}  (ln 2 = {np.log(2):.6f})")

worst = 0.0
rng = np.random.default_rng(1)
for _ in range(200):
    table = rng.random((3, 2, 3))
    table /= table.sum()
    lhs, rhs, _ = mi_chain_check(DiscreteJoint(table))
    worst = max(worst, abs(lhs - rhs))
print(f"200 random joints: max |lhs - rhs| = {worst:.2e}")

# --- analytic loss anchors ----------------------------------------------
from dytag import bce_link_loss, distribution_loss, instance_loss

z = ad.constant(np.zeros((8, 1)))
print(f"BCE at zero logits = {bce_link_loss(z, z).item():.6f} (ln 2)")
a = ad.constant(rng.standard_normal((5, 16)))
print(f"distribution loss of a batch against itself = "
      f"{distribution_loss(a, a).item():.1f}")
print(f"instance loss of a batch against its negation = "
      f"{instance_loss(a, ad.cmul(a, -1.0)).item():.1f}")
