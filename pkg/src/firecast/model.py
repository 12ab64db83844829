"""Generator and critic architectures.

Generator: fire and terrain feature extractors, FiLM conditioning from the
met/terrain summary vector, a residual U-Net backbone with skip connections,
and a noise tensor concatenated at the bottleneck. Decoder upsampling is
nearest-neighbor resize followed by convolution (strided transpose convs are
a known source of checkerboard artifacts).

Critic: same extractor/FiLM front end (without any normalization layer, so
per-sample input gradients are well defined), then a strided conv stack
ending in an N x N patch score grid whose mean is the critic score.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .dataset import COND_DIM

AE_COND_DIM = 61  # 3 steps x (4 hours x 5 features) + total horizon


@dataclass
class ModelConfig:
    grid: int = 32
    fire_channels: int = 8
    terrain_channels: int = 8
    base_channels: int = 8
    num_stages: int = 3           # stride-2 downsamplings in the U-Net
    channel_cap_mult: int = 4
    d_z: int = 64
    noise_channels: int = 8
    film_hidden: int = 24
    cond_dim: int = COND_DIM
    critic_base: int = 8
    critic_downs: int = 2
    critic_final_kernel: int = 5
    use_noise: bool = True

    def stage_channels(self) -> list[int]:
        cap = self.base_channels * self.channel_cap_mult
        return [min(self.base_channels * 2 ** k, cap) for k in range(self.num_stages + 1)]


def desk_config() -> ModelConfig:
    return ModelConfig()


def paper_config() -> ModelConfig:
    # 128 px inputs; three stride-2 critic stages then a 5x5 valid conv
    # produce the 12 x 12 patch grid.
    return ModelConfig(grid=128, fire_channels=32, terrain_channels=32,
                       base_channels=32, num_stages=4, film_hidden=64,
                       critic_base=32, critic_downs=3)


def ae_config(base: ModelConfig) -> ModelConfig:
    """Baseline encoder-decoder: no noise, conditioned on the full met tensor."""
    return replace(base, use_noise=False, cond_dim=AE_COND_DIM)


# ---------------------------------------------------------------------------
# parameter initialization helpers
# ---------------------------------------------------------------------------


class _Builder:
    """Creates named parameters with He fan-in initialization."""

    def __init__(self, rng: np.random.Generator, dtype=np.float32):
        self.rng = rng
        self.dtype = dtype
        self.params: dict[str, Tensor] = {}

    def conv(self, name: str, oc: int, ic: int, k: int, bias_value: float = 0.0):
        fan_in = ic * k * k
        w = self.rng.normal(0.0, np.sqrt(2.0 / fan_in), (oc, ic, k, k))
        self.params[f"{name}.w"] = ad.parameter(w.astype(self.dtype), f"{name}.w")
        b = np.full(oc, bias_value, dtype=self.dtype)
        self.params[f"{name}.b"] = ad.parameter(b, f"{name}.b")

    def dense(self, name: str, n_in: int, n_out: int, zero: bool = False):
        if zero:
            w = np.zeros((n_in, n_out))
        else:
            w = self.rng.normal(0.0, np.sqrt(2.0 / n_in), (n_in, n_out))
        self.params[f"{name}.w"] = ad.parameter(w.astype(self.dtype), f"{name}.w")
        self.params[f"{name}.b"] = ad.parameter(np.zeros(n_out, dtype=self.dtype), f"{name}.b")


def film_modulate(feature_map: Tensor, gamma: Tensor, beta: Tensor) -> Tensor:
    """Per-channel affine transform: out[c] = gamma[c] * in[c] + beta[c].

    ``gamma``/``beta`` are (N, C) or (C,); channel count must match the map.
    """
    c = feature_map.shape[1]
    if gamma.shape[-1] != c or beta.shape[-1] != c:
        raise ad.ShapeError(f"FiLM channel mismatch: map has {c}, "
                            f"gamma {gamma.shape}, beta {beta.shape}")
    g = ad.reshape(gamma, (-1, c, 1, 1) if gamma.ndim == 2 else (1, c, 1, 1))
    b = ad.reshape(beta, (-1, c, 1, 1) if beta.ndim == 2 else (1, c, 1, 1))
    return ad.add(ad.mul(feature_map, g), b)


class _FilmNet:
    """Two dense subnetworks predicting gamma and beta from the condition.

    Final layers are zero-initialized so training starts at the identity
    modulation (gamma = 1, beta = 0).
    """

    def __init__(self, builder: _Builder, name: str, cond_dim: int,
                 hidden: int, channels: int):
        self.name = name
        self.channels = channels
        builder.dense(f"{name}.g1", cond_dim, hidden)
        builder.dense(f"{name}.g2", hidden, channels, zero=True)
        builder.dense(f"{name}.b1", cond_dim, hidden)
        builder.dense(f"{name}.b2", hidden, channels, zero=True)

    def gamma_beta(self, p: dict, cond: Tensor) -> tuple[Tensor, Tensor]:
        hg = ad.leaky_relu(ad.dense(cond, p[f"{self.name}.g1.w"], p[f"{self.name}.g1.b"]), 0.2)
        dg = ad.dense(hg, p[f"{self.name}.g2.w"], p[f"{self.name}.g2.b"])
        gamma = ad.add_const(dg, 1.0)
        hb = ad.leaky_relu(ad.dense(cond, p[f"{self.name}.b1.w"], p[f"{self.name}.b1.b"]), 0.2)
        beta = ad.dense(hb, p[f"{self.name}.b2.w"], p[f"{self.name}.b2.b"])
        return gamma, beta

    def apply(self, p: dict, feature_map: Tensor, cond: Tensor) -> Tensor:
        gamma, beta = self.gamma_beta(p, cond)
        return film_modulate(feature_map, gamma, beta)


def _conv(p: dict, name: str, x: Tensor, stride: int = 1, padding: int = 1) -> Tensor:
    return ad.conv2d(x, p[f"{name}.w"], p[f"{name}.b"], stride=stride, padding=padding)


def _resblock(p: dict, name: str, x: Tensor) -> Tensor:
    h = ad.leaky_relu(_conv(p, f"{name}.c1", x), 0.2)
    h = _conv(p, f"{name}.c2", h)
    return ad.leaky_relu(ad.add(x, h), 0.2)


# ---------------------------------------------------------------------------
# generator
# ---------------------------------------------------------------------------


class Generator:
    """One-step spread predictor; also serves as the no-noise AE baseline."""

    def __init__(self, cfg: ModelConfig, seed: int = 0,
                 params: dict[str, Tensor] | None = None):
        self.cfg = cfg
        b = _Builder(np.random.default_rng(np.random.SeedSequence([seed, 101])))
        ff, ft = cfg.fire_channels, cfg.terrain_channels
        chans = cfg.stage_channels()
        film_cond = cfg.cond_dim + ft

        b.conv("fire1", ff, 1, 3)
        b.conv("fire2", ff, ff, 3)
        b.conv("terr1", ft, 3, 3)
        b.conv("terr2", ft, ft, 3)
        b.params["terr_bn.gamma"] = ad.parameter(np.ones((1, ft, 1, 1), np.float32), "terr_bn.gamma")
        b.params["terr_bn.beta"] = ad.parameter(np.zeros((1, ft, 1, 1), np.float32), "terr_bn.beta")
        self.film_in = _FilmNet(b, "film_in", film_cond, cfg.film_hidden, ff)
        b.conv("stem", chans[0], ff + ft, 3)
        for k in range(cfg.num_stages):
            b.conv(f"enc{k}.c1", chans[k], chans[k], 3)
            b.conv(f"enc{k}.c2", chans[k], chans[k], 3)
            b.conv(f"down{k}", chans[k + 1], chans[k], 3)
        b.conv("mid.c1", chans[-1], chans[-1], 3)
        b.conv("mid.c2", chans[-1], chans[-1], 3)
        if cfg.use_noise:
            b.dense("zproj", cfg.d_z, cfg.noise_channels)
            b.conv("mix", chans[-1], chans[-1] + cfg.noise_channels, 3)
        self.film_mid = _FilmNet(b, "film_mid", film_cond, cfg.film_hidden, chans[-1])
        for k in reversed(range(cfg.num_stages)):
            b.conv(f"up{k}", chans[k], chans[k + 1] + chans[k], 3)
        b.conv("head", 1, chans[0], 3)
        # input state re-enters the head in logit space, so an untrained
        # network starts near the identity map and training learns growth
        b.params["head_gate"] = ad.parameter(np.ones(1, np.float32), "head_gate")

        self.params = params if params is not None else b.params
        self.buffers = {
            "terr_bn.mean": Tensor(np.zeros((1, ft, 1, 1), np.float32)),
            "terr_bn.var": Tensor(np.ones((1, ft, 1, 1), np.float32)),
        }

    def param_list(self) -> list[Tensor]:
        return list(self.params.values())

    def parameter_count(self) -> int:
        return int(sum(t.size for t in self.params.values()))

    def state_dict(self) -> dict[str, Tensor]:
        d = dict(self.params)
        d.update({f"buffer.{k}": v for k, v in self.buffers.items()})
        return d

    def load_state_dict(self, state: dict[str, Tensor]) -> None:
        for k, t in self.params.items():
            t.data = state[k].data.reshape(t.data.shape).astype(t.data.dtype).copy()
        for k, t in self.buffers.items():
            t.data = state[f"buffer.{k}"].data.reshape(t.data.shape).astype(t.data.dtype).copy()

    def forward(self, fire: Tensor, terrain: Tensor, cond: Tensor,
                z: Tensor | None, training: bool = False) -> Tensor:
        p = self.params
        cfg = self.cfg

        f = ad.leaky_relu(_conv(p, "fire1", fire), 0.2)
        f = ad.leaky_relu(_conv(p, "fire2", f), 0.2)

        t = ad.leaky_relu(_conv(p, "terr1", terrain), 0.2)
        t = _conv(p, "terr2", t)
        t = ad.batch_norm(t, p["terr_bn.gamma"], p["terr_bn.beta"],
                          self.buffers["terr_bn.mean"], self.buffers["terr_bn.var"],
                          training=training)
        t = ad.leaky_relu(t, 0.2)

        pooled = ad.mean(t, axis=(2, 3))                       # (N, Ft) terrain summary
        film_cond = ad.concat([cond, pooled], axis=1)

        f = self.film_in.apply(p, f, film_cond)
        h = ad.leaky_relu(_conv(p, "stem", ad.concat([f, t], axis=1)), 0.2)

        skips = []
        for k in range(cfg.num_stages):
            e = _resblock(p, f"enc{k}", h)
            skips.append(e)
            h = ad.leaky_relu(_conv(p, f"down{k}", e, stride=2), 0.2)

        h = _resblock(p, "mid", h)
        if cfg.use_noise:
            if z is None:
                raise ad.ShapeError("generator configured with noise requires z")
            zc = ad.dense(z, p["zproj.w"], p["zproj.b"])        # (N, noise_channels)
            n, c = zc.shape
            hb, wb = h.shape[2], h.shape[3]
            zmap = ad.broadcast_to(ad.reshape(zc, (n, c, 1, 1)), (n, c, hb, wb))
            h = ad.leaky_relu(_conv(p, "mix", ad.concat([h, zmap], axis=1)), 0.2)
        h = self.film_mid.apply(p, h, film_cond)

        for k in reversed(range(cfg.num_stages)):
            h = ad.upsample_nearest2x(h)
            h = ad.relu(_conv(p, f"up{k}", ad.concat([h, skips[k]], axis=1)))

        eps = 0.02
        state_logit = Tensor(np.log((fire.data + eps) / (1.0 - fire.data + eps)))
        pre = ad.add(_conv(p, "head", h),
                     ad.mul(ad.reshape(p["head_gate"], (1, 1, 1, 1)), state_logit))
        return ad.sigmoid(pre)


# ---------------------------------------------------------------------------
# critic
# ---------------------------------------------------------------------------


class Critic:
    """PatchGAN-style Wasserstein critic; contains no normalization layers."""

    def __init__(self, cfg: ModelConfig, seed: int = 0,
                 params: dict[str, Tensor] | None = None):
        self.cfg = cfg
        b = _Builder(np.random.default_rng(np.random.SeedSequence([seed, 202])))
        ff, ft = cfg.fire_channels, cfg.terrain_channels
        film_cond = cfg.cond_dim + ft

        b.conv("fire1", ff, 2, 3)     # candidate + current state
        b.conv("fire2", ff, ff, 3)
        b.conv("terr1", ft, 3, 3)
        b.conv("terr2", ft, ft, 3)
        self.film = _FilmNet(b, "film", film_cond, cfg.film_hidden, ff)
        b.conv("stem", cfg.critic_base, ff + ft, 3)
        c = cfg.critic_base
        for k in range(cfg.critic_downs):
            b.conv(f"down{k}", 2 * c, c, 4)
            c *= 2
        b.conv("score", 1, c, cfg.critic_final_kernel)

        self.params = params if params is not None else b.params
        self.buffers: dict[str, Tensor] = {}

    def param_list(self) -> list[Tensor]:
        return list(self.params.values())

    def parameter_count(self) -> int:
        return int(sum(t.size for t in self.params.values()))

    def state_dict(self) -> dict[str, Tensor]:
        return dict(self.params)

    def load_state_dict(self, state: dict[str, Tensor]) -> None:
        for k, t in self.params.items():
            t.data = state[k].data.reshape(t.data.shape).astype(t.data.dtype).copy()

    def patch_grid(self, candidate: Tensor, fire_prev: Tensor,
                   terrain: Tensor, cond: Tensor) -> Tensor:
        p = self.params
        f = ad.leaky_relu(_conv(p, "fire1", ad.concat([candidate, fire_prev], axis=1)), 0.2)
        f = ad.leaky_relu(_conv(p, "fire2", f), 0.2)
        t = ad.leaky_relu(_conv(p, "terr1", terrain), 0.2)
        t = ad.leaky_relu(_conv(p, "terr2", t), 0.2)
        pooled = ad.mean(t, axis=(2, 3))
        film_cond = ad.concat([cond, pooled], axis=1)
        f = self.film.apply(p, f, film_cond)
        h = ad.leaky_relu(_conv(p, "stem", ad.concat([f, t], axis=1)), 0.2)
        for k in range(self.cfg.critic_downs):
            h = ad.leaky_relu(_conv(p, f"down{k}", h, stride=2, padding=1), 0.2)
        return _conv(p, "score", h, stride=1, padding=0)        # (N, 1, g, g), unbounded

    def forward(self, candidate: Tensor, fire_prev: Tensor,
                terrain: Tensor, cond: Tensor) -> tuple[Tensor, Tensor]:
        grid = self.patch_grid(candidate, fire_prev, terrain, cond)
        score = ad.mean(grid, axis=(1, 2, 3))                   # (N,)
        return score, grid


def init_models(cfg: ModelConfig, seed: int) -> tuple[Generator, Critic]:
    """Deterministic generator/critic pair for one config and seed."""
    return Generator(cfg, seed=seed), Critic(cfg, seed=seed)
