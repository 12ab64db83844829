"""Adversarial training loop and the MSE autoencoder baseline.

Each cycle runs ``n_critic`` critic updates (Wasserstein loss + gradient
penalty) followed by one generator update (adversarial + L1 + Dice), all via
Adam, teacher-forced on ground-truth state pairs. Losses are logged per
generator step; checkpoints capture parameters, optimizer state, and RNG
streams so training resumes bit-identically.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import AdamState, NumericsError, Tensor, adam_step, grad, no_grad
from .dataset import STEP_HOURS, FireDataset, condition_vector
from .losses import (
    LossWeights,
    adversarial_loss,
    dice_loss,
    discriminator_loss,
    generator_loss,
    gradient_penalty,
    l1_loss,
    wasserstein_loss,
)
from .model import Critic, Generator, ModelConfig, ae_config, init_models
from .params import load_params, save_params

LOG_COLUMNS = ("step", "L_D", "L_WGAN", "L_GP", "L_G", "L_adv", "L_L1", "L_Dice")


@dataclass
class TrainConfig:
    batch_size: int = 16
    g_steps: int = 2000
    n_critic: int = 5
    lr: float = 1e-4
    beta1: float = 0.5
    beta2: float = 0.9
    seed: int = 0
    checkpoint_every: int = 1000
    weights: LossWeights = field(default_factory=LossWeights)

    def validate(self) -> "TrainConfig":
        if self.batch_size < 1 or self.n_critic < 1:
            raise ValueError("batch_size and n_critic must be >= 1")
        self.weights.validate()
        return self

    def config_hash(self) -> str:
        payload = json.dumps(asdict(self), sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


def _streams(seed: int) -> dict[str, np.random.Generator]:
    return {
        "batch": np.random.default_rng(np.random.SeedSequence([seed, 11])),
        "noise": np.random.default_rng(np.random.SeedSequence([seed, 12])),
        "gp": np.random.default_rng(np.random.SeedSequence([seed, 13])),
    }


def _freeze(params: list[Tensor], frozen: bool) -> None:
    for p in params:
        p.requires_grad = not frozen


class Trainer:
    """Owns the generator/critic pair and their optimizer and RNG state."""

    def __init__(self, dataset: FireDataset, model_cfg: ModelConfig,
                 cfg: TrainConfig, out_dir=None):
        cfg.validate()
        self.dataset = dataset
        self.model_cfg = model_cfg
        self.cfg = cfg
        self.out_dir = Path(out_dir) if out_dir else None
        self.G, self.D = init_models(model_cfg, seed=cfg.seed)
        self.adam_g = AdamState(lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2)
        self.adam_d = AdamState(lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2)
        self.rngs = _streams(cfg.seed)
        self.g_updates = 0
        self.d_updates = 0
        self.history: list[dict] = []

    # -- single steps -------------------------------------------------------

    def _batch_tensors(self):
        fire, terrain, cond, target = self.dataset.sample_batch(
            self.rngs["batch"], self.cfg.batch_size)
        return Tensor(fire), Tensor(terrain), Tensor(cond), Tensor(target)

    def _noise(self, n: int) -> Tensor:
        z = self.rngs["noise"].standard_normal((n, self.model_cfg.d_z))
        return Tensor(z.astype(np.float32))

    def critic_step(self) -> tuple[float, float, float]:
        """One critic update on a fresh batch; generator untouched."""
        fire, terrain, cond, target = self._batch_tensors()
        n = self.cfg.batch_size
        z = self._noise(n)
        with no_grad():
            fake = self.G.forward(fire, terrain, cond, z, training=True)
        fake = Tensor(fake.data)  # constant for the critic's graph

        # fake and real share one forward pass (the critic has no
        # cross-sample ops, so batching cannot mix samples)
        both = Tensor(np.concatenate([fake.data, target.data]))
        fire2 = Tensor(np.concatenate([fire.data, fire.data]))
        terrain2 = Tensor(np.concatenate([terrain.data, terrain.data]))
        cond2 = Tensor(np.concatenate([cond.data, cond.data]))
        scores, _ = self.D.forward(both, fire2, terrain2, cond2)
        l_wgan = wasserstein_loss(ad.narrow(scores, 0, 0, n),
                                  ad.narrow(scores, 0, n, n))

        def critic_fn(candidate, fire_, terrain_, cond_):
            return self.D.forward(candidate, fire_, terrain_, cond_)[0]

        l_gp = gradient_penalty(critic_fn, target, fake,
                                (fire, terrain, cond), self.rngs["gp"])
        l_d = discriminator_loss(l_wgan, l_gp, self.cfg.weights.w_gp)
        l_d.assert_finite("critic loss")

        params = self.D.param_list()
        grads = grad(l_d, params)
        adam_step(params, grads, self.adam_d)
        self.d_updates += 1
        return l_d.item(), l_wgan.item(), l_gp.item()

    def generator_step(self) -> tuple[float, float, float, float]:
        """One generator update on a fresh batch; critic untouched."""
        fire, terrain, cond, target = self._batch_tensors()
        z = self._noise(self.cfg.batch_size)
        w = self.cfg.weights

        x_hat = self.G.forward(fire, terrain, cond, z, training=True)
        if w.w_adv != 0.0:
            _freeze(self.D.param_list(), True)
            try:
                scores_fake, _ = self.D.forward(x_hat, fire, terrain, cond)
                l_adv = adversarial_loss(scores_fake)
            finally:
                _freeze(self.D.param_list(), False)
        else:
            l_adv = Tensor(np.float32(0.0))
        l_l1 = l1_loss(target, x_hat)
        l_dice = dice_loss(target, x_hat)
        l_g = generator_loss(l_adv, l_l1, l_dice, w)
        l_g.assert_finite("generator loss")

        params = self.G.param_list()
        grads = grad(l_g, params)
        adam_step(params, grads, self.adam_g)
        self.g_updates += 1
        return l_g.item(), l_adv.item(), l_l1.item(), l_dice.item()

    # -- loop ---------------------------------------------------------------

    def train(self, g_steps: int | None = None, log_path=None) -> list[dict]:
        total = self.cfg.g_steps if g_steps is None else g_steps
        writer = None
        log_file = None
        if log_path is not None:
            log_file = open(log_path, "w", newline="")
            writer = csv.writer(log_file)
            writer.writerow(LOG_COLUMNS)
        try:
            if self.out_dir and total > 0 and self.g_updates == 0:
                self.save_checkpoint(self.out_dir / "ckpt_0")
            for _ in range(total):
                d_losses = [self.critic_step() for _ in range(self.cfg.n_critic)]
                g_loss = self.generator_step()
                mean_d = np.mean(d_losses, axis=0)
                row = {
                    "step": self.g_updates,
                    "L_D": float(mean_d[0]), "L_WGAN": float(mean_d[1]),
                    "L_GP": float(mean_d[2]), "L_G": g_loss[0],
                    "L_adv": g_loss[1], "L_L1": g_loss[2], "L_Dice": g_loss[3],
                }
                self.history.append(row)
                if writer:
                    writer.writerow([f"{row[c]:.9g}" if c != "step" else row[c]
                                     for c in LOG_COLUMNS])
                if (self.out_dir and self.cfg.checkpoint_every > 0
                        and self.g_updates % self.cfg.checkpoint_every == 0):
                    self.save_checkpoint(self.out_dir / f"ckpt_{self.g_updates}")
            if self.out_dir:
                self.save_checkpoint(self.out_dir / "ckpt_final")
        finally:
            if log_file:
                log_file.close()
        return self.history

    # -- checkpointing ------------------------------------------------------

    def save_checkpoint(self, directory) -> None:
        save_checkpoint(directory, self.G, self.D, self.adam_g, self.adam_d,
                        self.rngs, self.g_updates, self.d_updates,
                        self.cfg.config_hash())

    def load_checkpoint(self, directory) -> None:
        meta = load_checkpoint(directory, self.G, self.D, self.adam_g, self.adam_d,
                               self.rngs)
        self.g_updates = meta["g_updates"]
        self.d_updates = meta["d_updates"]


def save_checkpoint(directory, G: Generator, D: Critic | None,
                    adam_g: AdamState, adam_d: AdamState | None,
                    rngs: dict, g_updates: int, d_updates: int,
                    config_hash: str) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    save_params(G.state_dict(), directory / "G.json")
    if D is not None:
        save_params(D.state_dict(), directory / "D.json")

    header = {
        "g_params": len(G.param_list()),
        "d_params": len(D.param_list()) if D is not None else 0,
        "t_g": adam_g.t,
        "t_d": adam_d.t if adam_d is not None else 0,
    }
    blobs = []
    for st, model in ((adam_g, G), (adam_d, D)):
        if model is None or st is None:
            continue
        st.ensure(model.param_list())
        for m, v in zip(st.m, st.v):
            blobs.append(np.ascontiguousarray(m, dtype="<f4").tobytes())
            blobs.append(np.ascontiguousarray(v, dtype="<f4").tobytes())
    with open(directory / "optimizer.bin", "wb") as f:
        f.write(json.dumps(header).encode() + b"\n")
        f.write(b"".join(blobs))

    rng_state = {name: gen.bit_generator.state for name, gen in rngs.items()}
    (directory / "rng.json").write_text(json.dumps({
        "g_updates": g_updates,
        "d_updates": d_updates,
        "config_hash": config_hash,
        "rng": rng_state,
    }, indent=1))


def load_checkpoint(directory, G: Generator, D: Critic | None,
                    adam_g: AdamState, adam_d: AdamState | None,
                    rngs: dict) -> dict:
    directory = Path(directory)
    G.load_state_dict(load_params(directory / "G.json"))
    if D is not None:
        D.load_state_dict(load_params(directory / "D.json"))

    raw = (directory / "optimizer.bin").read_bytes()
    nl = raw.index(b"\n")
    header = json.loads(raw[:nl].decode())
    offset = nl + 1

    def read_state(st: AdamState, model, t: int):
        params = model.param_list()
        st.ensure(params)
        nonlocal offset
        for i, p in enumerate(params):
            n = p.size
            for dest in (st.m, st.v):
                arr = np.frombuffer(raw, dtype="<f4", count=n, offset=offset)
                dest[i] = arr.reshape(p.shape).astype(p.data.dtype).copy()
                offset += 4 * n
        st.t = t

    read_state(adam_g, G, header["t_g"])
    if D is not None and adam_d is not None:
        read_state(adam_d, D, header["t_d"])

    meta = json.loads((directory / "rng.json").read_text())
    for name, state in meta["rng"].items():
        if name in rngs:
            rngs[name].bit_generator.state = state
    return meta


# ---------------------------------------------------------------------------
# autoencoder baseline
# ---------------------------------------------------------------------------


class AETrainer:
    """MSE-trained encoder-decoder baseline.

    No fire-state input: every prediction starts from the ignition frame and
    maps environmental conditions directly to a chosen horizon's spread map.
    """

    def __init__(self, dataset: FireDataset, model_cfg: ModelConfig,
                 cfg: TrainConfig, out_dir=None):
        cfg.validate()
        self.dataset = dataset
        self.cfg = cfg
        self.model_cfg = ae_config(model_cfg)
        self.out_dir = Path(out_dir) if out_dir else None
        self.model = Generator(self.model_cfg, seed=cfg.seed)
        self.adam = AdamState(lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2)
        self.rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 21]))
        self.updates = 0
        self.history: list[dict] = []

    def _batch(self):
        ds = self.dataset
        b = self.cfg.batch_size
        h = w = ds.grid
        fire = np.empty((b, 1, h, w), dtype=np.float32)
        terrain = np.empty((b, 3, h, w), dtype=np.float32)
        cond = np.empty((b, 61), dtype=np.float32)
        target = np.empty((b, 1, h, w), dtype=np.float32)
        for i in range(b):
            rec, step = ds.sample_pair(self.rng)
            fire[i, 0] = rec.s0
            terrain[i] = rec.terrain
            cond[i] = ae_condition_vector(rec.met, step, ds.stats)
            target[i, 0] = rec.frames[step]
        return Tensor(fire), Tensor(terrain), Tensor(cond), Tensor(target)

    def step(self) -> float:
        fire, terrain, cond, target = self._batch()
        pred = self.model.forward(fire, terrain, cond, None, training=True)
        loss = ad.mean(ad.square(ad.sub(pred, target)))
        loss.assert_finite("AE loss")
        params = self.model.param_list()
        grads = grad(loss, params)
        adam_step(params, grads, self.adam)
        self.updates += 1
        return loss.item()

    def train(self, steps: int | None = None, log_path=None) -> list[dict]:
        total = self.cfg.g_steps if steps is None else steps
        rows = []
        for _ in range(total):
            mse = self.step()
            rows.append({"step": self.updates, "L_MSE": mse})
        self.history.extend(rows)
        if log_path is not None:
            with open(log_path, "w", newline="") as f:
                writer = csv.writer(f)
                writer.writerow(("step", "L_MSE"))
                for r in rows:
                    writer.writerow([r["step"], f"{r['L_MSE']:.9g}"])
        if self.out_dir:
            save_checkpoint(self.out_dir / "ckpt_final", self.model, None,
                            self.adam, None, {"ae": self.rng}, self.updates, 0,
                            self.cfg.config_hash())
        return rows

    def predict_horizon(self, rec, step: int) -> np.ndarray:
        """Direct prediction of one horizon from ignition + conditions."""
        ds = self.dataset
        fire = Tensor(rec.s0[None, None].astype(np.float32))
        terrain = Tensor(rec.terrain[None])
        cond = Tensor(ae_condition_vector(rec.met, step, ds.stats)[None].astype(np.float32))
        with no_grad():
            out = self.model.forward(fire, terrain, cond, None, training=False)
        return out.data[0, 0]


def ae_condition_vector(met: np.ndarray, horizon_step: int, stats) -> np.ndarray:
    """Full 12-hour met encoding plus the target horizon (one-shot model)."""
    parts = [condition_vector(met[k], STEP_HOURS, stats)[:-1] for k in range(3)]
    horizon = (horizon_step + 1) * STEP_HOURS / 12.0
    return np.concatenate(parts + [[horizon]]).astype(np.float32)
