"""Shapes and contracts of the generator and the patch critic.

The generator fuses a fire-state feature map (FiLM-modulated by weather)
with terrain features, pushes them through a residual U-Net, and injects a
noise tensor at the bottleneck. The critic scores overlapping patches and
averages the grid into one Wasserstein score.
"""

import numpy as np

from firecast.autodiff import Tensor, no_grad
from firecast.dataset import COND_DIM
from firecast.model import desk_config, film_modulate, init_models, paper_config

for label, cfg in (("desk", desk_config()), ("paper", paper_config())):
    G, D = init_models(cfg, seed=0)
    n = cfg.grid
    fire = Tensor(np.zeros((1, 1, n, n), np.float32))
    terr = Tensor(np.zeros((1, 3, n, n), np.float32))
    cond = Tensor(np.zeros((1, COND_DIM), np.float32))
    z = Tensor(np.random.default_rng(0).standard_normal((1, cfg.d_z)).astype(np.float32))
    with no_grad():
        out = G.forward(fire, terr, cond, z)
        score, grid = D.forward(out, fire, terr, cond)
    print(f"{label:5s}: grid {n}x{n} | G {G.parameter_count():,} params -> "
          f"output {out.shape} in [{out.data.min():.2f}, {out.data.max():.2f}] | "
          f"D {D.parameter_count():,} params -> patch grid {grid.shape[2]}x{grid.shape[3]}")

# FiLM is a per-channel affine transform predicted from the conditions
fm = Tensor(np.random.default_rng(1).standard_normal((1, 2, 3, 3)).astype(np.float32))
identity = film_modulate(fm, Tensor(np.ones(2)), Tensor(np.zeros(2)))
print("\nFiLM with gamma=1, beta=0 is exactly the identity:",
      bool(np.array_equal(identity.data, fm.data)))
doubled = film_modulate(fm, Tensor(np.array([2.0, 1.0])), Tensor(np.zeros(2)))
print("gamma=(2,1) doubles channel 0 only:",
      bool(np.allclose(doubled.data[0, 0], 2 * fm.data[0, 0])))
