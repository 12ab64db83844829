"""Shared fixtures: small in-memory datasets built from the oracle."""

import numpy as np
import pytest

from firecast.dataset import (
    FireDataset,
    MetStats,
    ScenarioRecord,
    build_met_tensor,
    encode_arrival_frames,
    filter_in_bounds,
    ignition_frame,
)
from firecast.oracle import build_environment, sample_scenario, simulate_arrival


def make_records(n_scenarios: int, start_seed: int = 0, grid: int = 32,
                 margin: int = 3) -> list[ScenarioRecord]:
    records = []
    seed = start_seed
    while len(records) < n_scenarios and seed < start_seed + 40 * n_scenarios:
        spec = sample_scenario(seed, grid_size=grid)
        env = build_environment(spec.terrain_seed, grid, spec.cell_size_m)
        field = simulate_arrival(spec, env)
        seed += 1
        if not filter_in_bounds(field, margin):
            continue
        records.append(ScenarioRecord(
            scenario_id=f"scn_{seed:05d}",
            frames=encode_arrival_frames(field),
            s0=ignition_frame(field),
            terrain=env.terrain_rgb.transpose(2, 0, 1).astype(np.float32),
            met=build_met_tensor(spec.weather),
            arrival=field,
        ))
    return records


@pytest.fixture(scope="session")
def tiny_dataset() -> FireDataset:
    records = make_records(6)
    stats = MetStats.fit([r.met for r in records])
    return FireDataset(records, stats)
