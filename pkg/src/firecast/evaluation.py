"""Held-out evaluation harness.

For every test scenario, three models predict the 4/8/12-hour spread maps
from the ignition state: the ensemble-rollout generator, the one-shot MSE
baseline, and persistence (the state never changes). All three go through
identical metric code, one CSV row per (sample, horizon, model).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import BURN_THRESHOLD, STEP_HOURS, FireDataset
from .inference import DEFAULT_ENSEMBLE, rollout
from .metrics import bmae, boundary_length, masked_mse, ssim_masked

HORIZONS = ("4h", "8h", "12h")
CSV_COLUMNS = ("sample", "horizon", "model", "mse", "ssim", "bmae", "flags")


@dataclass
class EvalRow:
    sample: str
    horizon: str
    model: str
    mse: float
    ssim: float
    bmae: float
    flags: str


def predict_cgan(G, dataset: FireDataset, rec, n_ensemble: int,
                 master_seed: int, jobs: int = 1) -> list[np.ndarray]:
    conds = [dataset.pair_condition(rec, k) for k in range(3)]
    result = rollout(G, rec.s0, rec.terrain, conds, n_ensemble=n_ensemble,
                     master_seed=master_seed, jobs=jobs)
    return result.means


def predict_persistence(rec) -> list[np.ndarray]:
    return [rec.s0.copy() for _ in range(3)]


def evaluate_frames(sample_id: str, model: str, truths, preds,
                    tau: float = BURN_THRESHOLD) -> list[EvalRow]:
    rows = []
    for k, name in enumerate(HORIZONS):
        m = masked_mse(truths[k], preds[k], tau)
        s = ssim_masked(truths[k], preds[k], tau)
        b = bmae(truths[k], preds[k], tau)
        flags = "|".join(f"{lbl}_empty" for lbl, v in
                         (("mse", m), ("ssim", s), ("bmae", b)) if v.empty_mask)
        rows.append(EvalRow(sample_id, name, model, m.value, s.value, b.value, flags))
    return rows


def evaluate_models(dataset: FireDataset, predictors: dict, tau: float = BURN_THRESHOLD
                    ) -> list[EvalRow]:
    """``predictors`` maps model name -> callable(rec) -> [3 frames]."""
    rows: list[EvalRow] = []
    for rec in dataset.records:
        truths = rec.frames
        for model, fn in predictors.items():
            rows.extend(evaluate_frames(rec.scenario_id, model, truths, fn(rec), tau))
    return rows


def write_metrics_csv(rows: list[EvalRow], path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(CSV_COLUMNS)
        for r in rows:
            writer.writerow([r.sample, r.horizon, r.model,
                             f"{r.mse:.9g}", f"{r.ssim:.9g}", f"{r.bmae:.9g}", r.flags])


def aggregate(rows: list[EvalRow]) -> dict:
    """Mean metric per (model, horizon), skipping flagged rows per metric."""
    out: dict = {}
    for model in sorted({r.model for r in rows}):
        out[model] = {}
        for horizon in HORIZONS:
            sel = [r for r in rows if r.model == model and r.horizon == horizon]
            agg = {}
            for metric in ("mse", "ssim", "bmae"):
                vals = [getattr(r, metric) for r in sel if f"{metric}_empty" not in r.flags]
                agg[metric] = float(np.mean(vals)) if vals else float("nan")
            agg["count"] = len(sel)
            out[model][horizon] = agg
    return out


def boundary_stats(dataset: FireDataset, predictors: dict,
                   tau: float = BURN_THRESHOLD) -> dict:
    """Mean perimeter pixel count per model (and ground truth), all horizons."""
    counts: dict[str, list[int]] = {"truth": []}
    for name in predictors:
        counts[name] = []
    for rec in dataset.records:
        for k in range(3):
            counts["truth"].append(boundary_length(rec.frames[k], tau))
        for name, fn in predictors.items():
            preds = fn(rec)
            for k in range(3):
                counts[name].append(boundary_length(preds[k], tau))
    return {name: float(np.mean(v)) for name, v in counts.items()}
