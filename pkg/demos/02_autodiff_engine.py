"""A tour of the reverse-mode engine that powers training.

Everything the networks need runs on numpy arrays with recorded vector-
Jacobian rules. The rules are themselves built from differentiable ops, so
a gradient can be differentiated again - the property the Wasserstein
gradient penalty depends on.
"""

import numpy as np

from firecast import autodiff as ad
from firecast.autodiff import Tensor, finite_difference_check, grad

# --- first-order: d/dx mean(x^2) ------------------------------------------
x = Tensor(np.array([1.0, 2.0, 3.0]), requires_grad=True)
loss = ad.mean(ad.square(x))
(gx,) = grad(loss, [x])
print("mean(x^2) at (1,2,3):", loss.item())
print("gradient:", gx.data, "(closed form: 2x/3)")

# --- gradient checking every op used by the models -------------------------
rng = np.random.default_rng(0)
w = Tensor(rng.standard_normal((4, 2, 3, 3)))
err = finite_difference_check(
    lambda t: ad.mean(ad.square(ad.conv2d(t, w, padding=1))),
    rng.standard_normal((2, 2, 8, 8)), h=1e-5)
print(f"\nconv2d gradcheck vs central differences: rel err {err:.2e}")

# --- second order: the gradient-penalty pattern ----------------------------
# D(x) = w.x is 3-Lipschitz when ||w|| = 3; penalty (||grad_x D|| - 1)^2 = 4
wvec = np.zeros(9)
wvec[4] = 3.0
wt = Tensor(wvec, requires_grad=True)
xt = Tensor(rng.random(9), requires_grad=True)
score = ad.sum_(ad.mul(wt, xt))
(g_input,) = grad(score, [xt], create_graph=True)
norm = ad.sqrt(ad.sum_(ad.square(g_input)))
penalty = ad.square(ad.add_const(norm, -1.0))
print(f"\nlinear critic with ||w|| = 3: penalty = {penalty.item():.6f} (expect 4)")

(g_w,) = grad(penalty, [wt])
print("d penalty / d w:", np.round(g_w.data, 3), "(closed form: 2(||w||-1) w/||w||)")
