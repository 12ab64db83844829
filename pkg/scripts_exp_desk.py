"""Desk-scale end-to-end experiment: margins for the acceptance gates."""
import json
import sys
import time

import numpy as np

sys.path.insert(0, "tests")
from conftest import make_records

from firecast.dataset import FireDataset, MetStats, split_scenarios
from firecast.evaluation import (aggregate, boundary_stats, evaluate_models,
                                 predict_cgan, predict_persistence)
from firecast.model import desk_config
from firecast.training import AETrainer, TrainConfig, Trainer

SEED = int(sys.argv[1]) if len(sys.argv) > 1 else 0
BATCH = int(sys.argv[2]) if len(sys.argv) > 2 else 8
G_STEPS = int(sys.argv[3]) if len(sys.argv) > 3 else 2000

t0 = time.time()
records = make_records(500, start_seed=0)
print(f"[{time.time()-t0:6.1f}s] built {len(records)} scenarios", flush=True)

ids = [r.scenario_id for r in records]
train_ids, test_ids = split_scenarios(ids, 0.8, seed=SEED)
by_id = {r.scenario_id: r for r in records}
train_recs = [by_id[i] for i in train_ids]
test_recs = [by_id[i] for i in test_ids]
stats = MetStats.fit([r.met for r in train_recs])
train_ds = FireDataset(train_recs, stats)
test_ds = FireDataset(test_recs, stats)
print(f"[{time.time()-t0:6.1f}s] split {len(train_recs)}/{len(test_recs)}", flush=True)

cfg = TrainConfig(batch_size=BATCH, g_steps=G_STEPS, n_critic=5, seed=SEED,
                  checkpoint_every=0)
tr = Trainer(train_ds, desk_config(), cfg)
hist = tr.train()
print(f"[{time.time()-t0:6.1f}s] CGAN trained; last={hist[-1]}", flush=True)

ae = AETrainer(train_ds, desk_config(), cfg)
ae_hist = ae.train(G_STEPS)
print(f"[{time.time()-t0:6.1f}s] AE trained; last mse={ae_hist[-1]['L_MSE']:.5f}", flush=True)

predictors = {
    "cgan": lambda rec: predict_cgan(tr.G, test_ds, rec, 5, master_seed=SEED),
    "ae": lambda rec: [ae.predict_horizon(rec, k) for k in range(3)],
    "persistence": lambda rec: predict_persistence(rec),
}
rows = evaluate_models(test_ds, predictors)
agg = aggregate(rows)
bstats = boundary_stats(test_ds, predictors)
print(f"[{time.time()-t0:6.1f}s] evaluated {len(rows)} rows", flush=True)

print(json.dumps(agg, indent=1))
print("boundary:", json.dumps(bstats))

h = ["4h", "8h", "12h"]
a_ok = all(agg["cgan"][k]["mse"] < agg["persistence"][k]["mse"] for k in h)
cgan_bmae = np.mean([agg["cgan"][k]["bmae"] for k in h])
ae_bmae = np.mean([agg["ae"][k]["bmae"] for k in h])
c_ok = bstats["ae"] < bstats["truth"]
print(f"\n(a) cgan<persistence at every horizon: {a_ok}")
for k in h:
    print(f"    {k}: cgan {agg['cgan'][k]['mse']:.5f} vs pers {agg['persistence'][k]['mse']:.5f}"
          f" | ssim {agg['cgan'][k]['ssim']:.4f}")
print(f"(b) cgan BMAE {cgan_bmae:.5f} <= ae BMAE {ae_bmae:.5f}: {cgan_bmae <= ae_bmae}"
      f" (margin {ae_bmae - cgan_bmae:+.5f})")
print(f"(c) ae boundary {bstats['ae']:.2f} < truth boundary {bstats['truth']:.2f}: {c_ok}")
print(f"total {(time.time()-t0)/60:.1f} min")
