"""How arrival times become network inputs.

Burned pixels carry their arrival time on a linear intensity ramp
(minute 0 -> 255/255, minute 720 -> 30/255); three nested frames snapshot
the fire at 4, 8, and 12 hours; the 12-hour weather table folds into a
(3, 4, 4) tensor, one 4-hour slice per autoregressive step.
"""

import numpy as np

from firecast.dataset import (
    MetStats,
    build_met_tensor,
    condition_vector,
    encode_arrival_frames,
    intensity_of,
    minutes_of,
)
from firecast.oracle import build_environment, sample_scenario, simulate_arrival

print("intensity ramp:")
for t in (0, 120, 360, 720):
    i = float(intensity_of(t))
    print(f"  {t:4d} min -> {i:.4f} ({i * 255:.1f}/255), decodes to {float(minutes_of(i)):.1f} min")

spec = sample_scenario(7)
env = build_environment(spec.terrain_seed, spec.grid_size, spec.cell_size_m)
field = simulate_arrival(spec, env)
frames = encode_arrival_frames(field)

print("\nnesting across horizons (a burned pixel never unburns):")
for k, name in enumerate(("4h", "8h", "12h")):
    print(f"  {name}: {int((frames[k] > 0).sum())} burned px")
shared = frames[0] > 0
print("  intensities agree on shared support:",
      bool(np.array_equal(frames[0][shared], frames[2][shared])))

met = build_met_tensor(spec.weather)
print(f"\nmet tensor shape: {met.shape}  (steps x hours x variables)")
print("step 1 slice (hours 4-7):")
print(np.round(met[1], 1))

stats = MetStats.fit([spec.weather])
cond = condition_vector(met[1], dt_hours=4.0, stats=stats)
print(f"\nconditioning vector for step 1: {cond.shape[0]} dims "
      "(4 hours x [speed, sin dir, cos dir, temp, RH] + step interval)")
print(np.round(cond, 2))
