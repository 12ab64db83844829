"""Training data representation and on-disk layout.

Arrival-time fields become three nested grayscale spread frames (4 h, 8 h,
12 h): burned pixels encode arrival time on a linear 255-to-30 ramp over
0-720 minutes (scaled to [0, 1] internally); unburned pixels are 0. Hourly
weather becomes a (3, 4, 4) tensor, one 4-hour slice per prediction step.

Per-scenario directory: ``frames/{4h,8h,12h}.pgm`` (binary P5),
``terrain.ppm`` (binary P6), ``met.csv``, ``arrival.f32`` + ``meta.json``.
A dataset index JSON lists scenario dirs with split tags and the met
normalization statistics (computed on the training split only).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .oracle import (
    HOURS,
    ArrivalTimeField,
    EnvironmentGrid,
    ScenarioSpec,
    load_arrival,
    save_arrival,
)

HORIZON_MINUTES = 720.0
FRAME_MINUTES = 240.0            # three equal intervals
INTENSITY_EARLIEST = 1.0         # 255/255, burn at minute 0
INTENSITY_LATEST = 30.0 / 255.0  # burn at minute 720
BURN_THRESHOLD = 15.0 / 255.0    # midway between background and latest burn
STEP_HOURS = 4.0
MET_COLUMNS = ("wind_speed_ms", "wind_dir_deg", "temperature_c", "relative_humidity_pct")
COND_DIM = 21                    # 4 hours x (speed, sin, cos, temp, rh) + dt


class DatasetError(Exception):
    pass


# ---------------------------------------------------------------------------
# intensity encoding
# ---------------------------------------------------------------------------


def intensity_of(t_minutes):
    """Linear arrival-time ramp: minute 0 -> 1.0, minute 720 -> 30/255."""
    t = np.asarray(t_minutes, dtype=np.float64)
    if np.any(t < 0) or np.any(t > HORIZON_MINUTES):
        raise DatasetError("arrival time outside [0, 720] minutes")
    return (255.0 - 225.0 * t / HORIZON_MINUTES) / 255.0


def minutes_of(intensity):
    """Inverse of ``intensity_of`` for burned pixels."""
    i = np.asarray(intensity, dtype=np.float64)
    return (255.0 - 255.0 * i) * (HORIZON_MINUTES / 225.0)


def encode_arrival_frames(field: ArrivalTimeField) -> np.ndarray:
    """(3, H, W) spread frames at the 4, 8, and 12 hour horizons."""
    t = field.times
    finite = np.isfinite(t)
    # f32-persisted fields can sit half a quantum past the horizon
    t_clipped = np.where(finite, np.minimum(t, HORIZON_MINUTES), 0.0)
    intensity = np.where(finite, intensity_of(t_clipped), 0.0)
    frames = np.zeros((3,) + t.shape, dtype=np.float64)
    for k in range(3):
        frames[k] = np.where(finite & (t_clipped <= FRAME_MINUTES * (k + 1)), intensity, 0.0)
    return frames


def ignition_frame(field: ArrivalTimeField) -> np.ndarray:
    """The initial state: a single cell burning at intensity 1.0."""
    s0 = np.zeros_like(field.times)
    s0[field.ignition] = INTENSITY_EARLIEST
    return s0


def check_sequence(frames: np.ndarray) -> bool:
    """Mask nesting and intensity persistence across the three horizons."""
    for k in range(2):
        a, b = frames[k], frames[k + 1]
        if np.any((a > 0) & (b == 0)):
            return False
        on = a > 0
        if not np.array_equal(a[on], b[on]):
            return False
    valid = (frames == 0) | ((frames >= INTENSITY_LATEST - 1e-12) & (frames <= 1.0))
    return bool(np.all(valid))


def filter_in_bounds(field: ArrivalTimeField, margin_cells: int) -> bool:
    """True iff no burned cell lies within ``margin_cells`` of a grid edge."""
    if margin_cells < 0:
        raise DatasetError("margin must be >= 0")
    finite = np.isfinite(field.times)
    if margin_cells == 0:
        return True
    m = margin_cells
    border = np.ones_like(finite)
    border[m:-m, m:-m] = False
    return not bool(np.any(finite & border))


# ---------------------------------------------------------------------------
# meteorological tensor
# ---------------------------------------------------------------------------


def build_met_tensor(hourly: np.ndarray) -> np.ndarray:
    """(12, 4) hourly weather -> (3, 4, 4), hour order preserved per step."""
    h = np.asarray(hourly, dtype=np.float64)
    if h.shape != (HOURS, 4):
        raise DatasetError(f"expected (12, 4) hourly weather, got {h.shape}")
    return h.reshape(3, 4, 4)


@dataclass
class MetStats:
    """Per-variable normalization statistics (training split only)."""

    mean: np.ndarray  # (4,) aligned with MET_COLUMNS; wind dir entry unused
    std: np.ndarray

    def to_json(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_json(cls, d: dict) -> "MetStats":
        return cls(mean=np.asarray(d["mean"]), std=np.asarray(d["std"]))

    @classmethod
    def fit(cls, met_list) -> "MetStats":
        stacked = np.concatenate([np.asarray(m).reshape(-1, 4) for m in met_list], axis=0)
        mean = stacked.mean(axis=0)
        std = np.maximum(stacked.std(axis=0), 1e-6)
        return cls(mean=mean, std=std)


def condition_vector(met_step: np.ndarray, dt_hours: float, stats: MetStats) -> np.ndarray:
    """Flatten one (4, 4) met slice into the conditioning vector.

    Wind direction is turned into (sin, cos) so that 359 deg and 1 deg are
    neighbors; speed, temperature and humidity are standardized with the
    training-split statistics.
    """
    m = np.asarray(met_step, dtype=np.float64)
    if m.shape != (4, 4):
        raise DatasetError(f"expected a (4, 4) met slice, got {m.shape}")
    ws = (m[:, 0] - stats.mean[0]) / stats.std[0]
    wd = np.radians(m[:, 1])
    temp = (m[:, 2] - stats.mean[2]) / stats.std[2]
    rh = (m[:, 3] - stats.mean[3]) / stats.std[3]
    per_hour = np.stack([ws, np.sin(wd), np.cos(wd), temp, rh], axis=1)  # (4, 5)
    return np.concatenate([per_hour.reshape(-1), [dt_hours / STEP_HOURS]])


# ---------------------------------------------------------------------------
# PGM / PPM
# ---------------------------------------------------------------------------


def write_pgm(path, image01: np.ndarray) -> None:
    img = np.asarray(image01, dtype=np.float64)
    data = np.rint(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    h, w = data.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode())
        f.write(data.tobytes())


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as f:
        buf = f.read()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while pos < len(buf) and buf[pos:pos + 1].isspace():
            pos += 1
        if buf[pos:pos + 1] == b"#":
            while buf[pos:pos + 1] not in (b"\n", b""):
                pos += 1
            continue
        start = pos
        while pos < len(buf) and not buf[pos:pos + 1].isspace():
            pos += 1
        tokens.append(buf[start:pos])
    if tokens[0] != b"P5":
        raise DatasetError(f"not a binary PGM: {path}")
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    pos += 1
    data = np.frombuffer(buf, dtype=np.uint8, count=w * h, offset=pos)
    return data.reshape(h, w).astype(np.float64) / maxval


def write_ppm(path, rgb01: np.ndarray) -> None:
    img = np.asarray(rgb01, dtype=np.float64)
    data = np.rint(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    h, w, _ = data.shape
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode())
        f.write(data.tobytes())


def read_ppm(path) -> np.ndarray:
    with open(path, "rb") as f:
        buf = f.read()
    header = buf.split(maxsplit=4)
    if header[0] != b"P6":
        raise DatasetError(f"not a binary PPM: {path}")
    w, h = int(header[1]), int(header[2])
    offset = len(buf) - w * h * 3
    data = np.frombuffer(buf, dtype=np.uint8, offset=offset)
    return data.reshape(h, w, 3).astype(np.float64) / 255.0


# ---------------------------------------------------------------------------
# scenario directories
# ---------------------------------------------------------------------------

_FRAME_NAMES = ("4h", "8h", "12h")


def write_scenario_dir(directory, spec: ScenarioSpec, env: EnvironmentGrid,
                       field: ArrivalTimeField) -> None:
    directory = Path(directory)
    (directory / "frames").mkdir(parents=True, exist_ok=True)
    frames = encode_arrival_frames(field)
    for k, name in enumerate(_FRAME_NAMES):
        write_pgm(directory / "frames" / f"{name}.pgm", frames[k])
    write_ppm(directory / "terrain.ppm", env.terrain_rgb)
    with open(directory / "met.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(MET_COLUMNS)
        for row in spec.weather:
            writer.writerow([f"{v:.6f}" for v in row])
    save_arrival(field, directory / "arrival.f32", directory / "meta.json")
    meta = json.loads((directory / "meta.json").read_text())
    meta.update({
        "terrain_seed": spec.terrain_seed,
        "grid_size": spec.grid_size,
    })
    (directory / "meta.json").write_text(json.dumps(meta, indent=1))


def read_met_csv(path) -> np.ndarray:
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if tuple(rows[0]) != MET_COLUMNS:
        raise DatasetError(f"unexpected met.csv header in {path}")
    data = np.asarray([[float(v) for v in row] for row in rows[1:]], dtype=np.float64)
    if data.shape != (HOURS, 4):
        raise DatasetError(f"met.csv must have 12 rows, got {data.shape[0]}")
    return data


@dataclass
class ScenarioRecord:
    """One loaded scenario: frames, initial state, conditions."""

    scenario_id: str
    frames: np.ndarray           # (3, H, W) real-valued intensities
    s0: np.ndarray               # (H, W) ignition frame
    terrain: np.ndarray          # (3, H, W) float32, CHW for the networks
    met: np.ndarray              # (3, 4, 4)
    arrival: ArrivalTimeField


def read_scenario_dir(directory) -> ScenarioRecord:
    directory = Path(directory)
    field = load_arrival(directory / "arrival.f32", directory / "meta.json")
    met = build_met_tensor(read_met_csv(directory / "met.csv"))
    terrain = read_ppm(directory / "terrain.ppm").transpose(2, 0, 1).astype(np.float32)
    return ScenarioRecord(
        scenario_id=directory.name,
        frames=encode_arrival_frames(field),
        s0=ignition_frame(field),
        terrain=terrain,
        met=met,
        arrival=field,
    )


# ---------------------------------------------------------------------------
# split / index
# ---------------------------------------------------------------------------


def split_scenarios(ids: list[str], train_fraction: float = 0.8,
                    seed: int = 0) -> tuple[list[str], list[str]]:
    """Deterministic split by scenario id (no pair-level leakage)."""
    if not ids:
        raise DatasetError("empty dataset")
    order = sorted(ids)
    rng = np.random.default_rng(seed)
    rng.shuffle(order)
    n_train = int(round(train_fraction * len(order)))
    if len(order) >= 2:
        n_train = min(max(n_train, 1), len(order) - 1)
    return sorted(order[:n_train]), sorted(order[n_train:])


def build_index(root, train_fraction: float = 0.8, seed: int = 0,
                margin_cells: int = 3) -> dict:
    """Filter boundary-touching simulations, split, fit met statistics."""
    root = Path(root)
    dirs = sorted(d for d in root.iterdir() if (d / "arrival.f32").exists())
    if not dirs:
        raise DatasetError(f"no scenario directories under {root}")
    kept, dropped = [], 0
    for d in dirs:
        field = load_arrival(d / "arrival.f32", d / "meta.json")
        if filter_in_bounds(field, margin_cells):
            kept.append(d.name)
        else:
            dropped += 1
    if not kept:
        raise DatasetError("every scenario touched the boundary; nothing to index")
    train_ids, test_ids = split_scenarios(kept, train_fraction, seed)
    stats = MetStats.fit([read_met_csv(root / sid / "met.csv") for sid in train_ids])
    index = {
        "scenarios": (
            [{"dir": sid, "split": "train"} for sid in train_ids]
            + [{"dir": sid, "split": "test"} for sid in test_ids]
        ),
        "met_stats": stats.to_json(),
        "margin_cells": margin_cells,
        "train_fraction": train_fraction,
        "split_seed": seed,
        "total_simulated": len(dirs),
        "retained": len(kept),
        "dropped_out_of_bounds": dropped,
    }
    (root / "index.json").write_text(json.dumps(index, indent=1))
    return index


# ---------------------------------------------------------------------------
# in-memory dataset + pair sampling
# ---------------------------------------------------------------------------


class FireDataset:
    """Loaded scenario records with teacher-forced pair sampling."""

    def __init__(self, records: list[ScenarioRecord], stats: MetStats):
        if not records:
            raise DatasetError("empty dataset")
        self.records = records
        self.stats = stats
        self.grid = records[0].frames.shape[-1]

    @classmethod
    def load(cls, root, split: str) -> "FireDataset":
        root = Path(root)
        index = json.loads((root / "index.json").read_text())
        stats = MetStats.from_json(index["met_stats"])
        records = [read_scenario_dir(root / e["dir"])
                   for e in index["scenarios"] if e["split"] == split]
        return cls(records, stats)

    def input_frame(self, rec: ScenarioRecord, step: int) -> np.ndarray:
        return rec.s0 if step == 0 else rec.frames[step - 1]

    def pair_condition(self, rec: ScenarioRecord, step: int) -> np.ndarray:
        return condition_vector(rec.met[step], STEP_HOURS, self.stats)

    def sample_pair(self, rng: np.random.Generator):
        """Uniform draw over (scenario, step) with step in {0, 1, 2}."""
        rec = self.records[int(rng.integers(len(self.records)))]
        step = int(rng.integers(3))
        return rec, step

    def sample_batch(self, rng: np.random.Generator, batch_size: int):
        """Stacked float32 arrays: fire, terrain, condition, target."""
        h = w = self.grid
        fire = np.empty((batch_size, 1, h, w), dtype=np.float32)
        terrain = np.empty((batch_size, 3, h, w), dtype=np.float32)
        cond = np.empty((batch_size, COND_DIM), dtype=np.float32)
        target = np.empty((batch_size, 1, h, w), dtype=np.float32)
        for i in range(batch_size):
            rec, step = self.sample_pair(rng)
            fire[i, 0] = self.input_frame(rec, step)
            terrain[i] = rec.terrain
            cond[i] = self.pair_condition(rec, step)
            target[i, 0] = rec.frames[step]
        return fire, terrain, cond, target

    def all_pairs(self):
        for rec in self.records:
            for step in range(3):
                yield rec, step
