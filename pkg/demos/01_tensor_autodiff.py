"""Tensor core walkthrough: reverse-mode gradients, attention, and Adam.

Run:  python demos/01_tensor_autodiff.py
"""

import numpy as np

from gapgrep import autodiff as ad
from gapgrep.attention import MhaParams, multi_head_attention
from gapgrep.optim import AdamConfig, AdamState, adam_step

rng = np.random.default_rng(0)

# --- a tiny computation graph -------------------------------------------
print("== gradients through a tanh-affine layer ==")
x = ad.Tensor(rng.normal(size=(4, 3)))
w = ad.parameter(rng.normal(size=(3, 2)), "w")
b = ad.parameter(np.zeros(2), "b")
loss = ad.mean_all(ad.tanh_affine(x, w, b))
loss.backward()
print("loss:", float(loss.data))
print("dL/db:", b.grad)

# The same gradients, checked against central finite differences.
err = ad.grad_check(lambda: ad.mean_all(ad.tanh_affine(x, w, b)), {"w": w, "b": b}, step=1e-5)
print(f"max relative error vs finite differences: {err:.2e}")

# --- masked softmax -------------------------------------------------------
print("\n== masked softmax ==")
scores = ad.Tensor([2.0, 0.0, -1.0, 5.0])
mask = np.array([True, True, True, False])
probs = ad.softmax(scores, mask=mask)
print("weights:", probs.data, "(masked position is exactly 0, rest sum to 1)")

# --- multi-head attention -------------------------------------------------
print("\n== multi-head attention over a 3-row memory ==")
params = MhaParams.init(8, heads=2, rng=rng)
query = ad.Tensor(rng.normal(size=(1, 8)))
memory = ad.Tensor(rng.normal(size=(3, 8)))
out, weights = multi_head_attention(query, memory, memory, params)
print("output shape:", out.shape)
print("per-head attention rows (each sums to 1):")
print(np.round(weights[:, 0, :], 3))

# --- Adam on a quadratic --------------------------------------------------
print("\n== Adam with decoupled weight decay on f(p) = (p - 3)^2 ==")
p = ad.parameter([0.0], "p")
state = AdamState()
config = AdamConfig(lr=0.1, weight_decay=0.0)
for step in range(200):
    diff = ad.add(p, -3.0)
    f = ad.sum_axis(ad.mul(diff, diff))
    p.zero_grad()
    f.backward()
    adam_step({"p": p}, state, config)
print(f"after {state.t} steps: p = {p.data[0]:.4f} (target 3.0)")
