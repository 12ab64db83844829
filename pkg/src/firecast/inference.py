"""Autoregressive ensemble prediction.

Each step draws ``n_ensemble`` noise vectors from per-member seed streams,
averages the member predictions into one robust next state, and feeds that
mean back as the next input. Members are retained for burn-probability and
percentile queries. Everything is a pure function of (parameters, inputs,
master seed), independent of execution schedule.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor, no_grad
from .dataset import BURN_THRESHOLD
from .model import Generator

DEFAULT_ENSEMBLE = 5
_MEMBER_TAG = 0x454E53  # stream namespace for ensemble member seeds


class InferenceError(Exception):
    pass


@dataclass
class EnsembleBundle:
    """Member predictions for one step plus their exact pixel mean."""

    members: np.ndarray          # (N_E, H, W)
    mean: np.ndarray             # (H, W)
    master_seed: int
    member_seeds: list[int]

    def recompute_mean(self) -> np.ndarray:
        return member_mean(self.members)


@dataclass
class RolloutResult:
    """Bundles for steps 1..n; step k's input was step k-1's mean."""

    s0: np.ndarray
    bundles: list[EnsembleBundle] = field(default_factory=list)

    @property
    def means(self) -> list[np.ndarray]:
        return [b.mean for b in self.bundles]


def member_mean(members: np.ndarray) -> np.ndarray:
    """Mean in fixed member order (pairwise reduction left to right)."""
    acc = members[0].astype(np.float64)
    for k in range(1, members.shape[0]):
        acc += members[k]
    return (acc / members.shape[0]).astype(members.dtype)


def member_seed(master_seed: int, index: int) -> int:
    ss = np.random.SeedSequence([int(master_seed), _MEMBER_TAG, int(index)])
    return int(ss.generate_state(1, np.uint64)[0])


def predict_step_ensemble(G: Generator, fire: np.ndarray, terrain: np.ndarray,
                          cond: np.ndarray, n_ensemble: int = DEFAULT_ENSEMBLE,
                          master_seed: int = 0, jobs: int = 1) -> EnsembleBundle:
    """One prediction step with ``n_ensemble`` noise draws.

    Member i's noise comes from an independent stream derived from
    (master_seed, member-tag, i), so results do not depend on how members
    are scheduled.
    """
    if n_ensemble < 1:
        raise InferenceError("n_ensemble must be >= 1")
    for name, t in (("fire", fire), ("terrain", terrain)):
        if not np.all(np.isfinite(t)):
            raise InferenceError(f"non-finite values in {name} input")

    fire_t = Tensor(fire[None, None].astype(np.float32))
    terrain_t = Tensor(terrain[None].astype(np.float32))
    cond_t = Tensor(np.asarray(cond, dtype=np.float32)[None])
    seeds = [member_seed(master_seed, i) for i in range(n_ensemble)]

    def run_member(seed: int) -> np.ndarray:
        rng = np.random.default_rng(seed)
        z = Tensor(rng.standard_normal((1, G.cfg.d_z)).astype(np.float32))
        with no_grad():
            out = G.forward(fire_t, terrain_t, cond_t, z, training=False)
        return out.data[0, 0].copy()

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            members = list(pool.map(run_member, seeds))
    else:
        members = [run_member(s) for s in seeds]

    members = np.stack(members)
    return EnsembleBundle(members=members, mean=member_mean(members),
                          master_seed=master_seed, member_seeds=seeds)


def rollout(G: Generator, s0: np.ndarray, terrain: np.ndarray,
            conditions: list[np.ndarray], n_ensemble: int = DEFAULT_ENSEMBLE,
            master_seed: int = 0, jobs: int = 1,
            monotonic: bool = False) -> RolloutResult:
    """Iterate the one-step predictor, feeding back each step's ensemble mean.

    ``conditions`` holds one conditioning vector per step. With ``monotonic``
    the support of each mean is OR-ed with the previous state at the burn
    threshold (an optional post-process; off by default so the raw model
    behavior is preserved).
    """
    result = RolloutResult(s0=s0.copy())
    state = s0
    for k, cond in enumerate(conditions):
        bundle = predict_step_ensemble(G, state, terrain, cond, n_ensemble,
                                       master_seed=member_seed(master_seed, 1000 + k),
                                       jobs=jobs)
        if monotonic:
            keep = state >= BURN_THRESHOLD
            merged = bundle.mean.copy()
            merged[keep] = np.maximum(merged[keep], state[keep])
            bundle = EnsembleBundle(members=bundle.members, mean=merged,
                                    master_seed=bundle.master_seed,
                                    member_seeds=bundle.member_seeds)
        result.bundles.append(bundle)
        state = bundle.mean
    return result


def burn_probability(bundle: EnsembleBundle, tau: float = BURN_THRESHOLD) -> np.ndarray:
    """Fraction of members that call each cell burned (intensity >= tau)."""
    if not 0.0 < tau < 1.0:
        raise InferenceError("tau must lie in (0, 1)")
    return (bundle.members >= tau).mean(axis=0)


def percentile_map(bundle: EnsembleBundle, p: float) -> np.ndarray:
    """Per-pixel order statistic with linear rank interpolation."""
    if not 0.0 <= p <= 100.0:
        raise InferenceError("percentile must lie in [0, 100]")
    return np.percentile(bundle.members, p, axis=0)
