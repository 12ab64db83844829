"""Objective terms for adversarial training.

Generator: weighted sum of adversarial score, pixel L1, and soft Dice
overlap (weights 1.0 / 20 / 0.3). Critic: Wasserstein separation plus a
gradient penalty (weight 10) that pushes the per-sample input-gradient norm
toward 1 on real/fake interpolates.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

DICE_EPS = 1e-7


@dataclass
class LossWeights:
    w_adv: float = 1.0
    w_l1: float = 20.0
    w_dice: float = 0.3
    w_gp: float = 10.0

    def validate(self) -> "LossWeights":
        if min(self.w_adv, self.w_l1, self.w_dice, self.w_gp) < 0:
            raise ValueError("loss weights must be nonnegative")
        return self


def adversarial_loss(scores_fake: Tensor) -> Tensor:
    """Negative mean critic score of generated samples."""
    return ad.scale(ad.mean(scores_fake), -1.0)


def l1_loss(x: Tensor, x_hat: Tensor) -> Tensor:
    """Pixel-wise mean absolute error."""
    if x.shape != x_hat.shape:
        raise ad.ShapeError(f"l1_loss shape mismatch: {x.shape} vs {x_hat.shape}")
    return ad.mean(ad.abs_(ad.sub(x, x_hat)))


def dice_loss(x: Tensor, x_hat: Tensor, eps: float = DICE_EPS) -> Tensor:
    """Soft Dice on raw intensities: 1 - (2*sum(x*xh)+eps)/(sum(x)+sum(xh)+eps).

    No binarization; sums run over every element of the given tensors, so a
    batch contributes a single pooled overlap term.
    """
    if x.shape != x_hat.shape:
        raise ad.ShapeError(f"dice_loss shape mismatch: {x.shape} vs {x_hat.shape}")
    inter = ad.sum_(ad.mul(x, x_hat))
    total = ad.add(ad.sum_(x), ad.sum_(x_hat))
    ratio = ad.div(ad.add_const(ad.scale(inter, 2.0), eps), ad.add_const(total, eps))
    return ad.add_const(ad.scale(ratio, -1.0), 1.0)


def generator_loss(l_adv: Tensor, l_l1: Tensor, l_dice: Tensor,
                   w: LossWeights) -> Tensor:
    return ad.add(ad.add(ad.scale(l_adv, w.w_adv), ad.scale(l_l1, w.w_l1)),
                  ad.scale(l_dice, w.w_dice))


def wasserstein_loss(scores_fake: Tensor, scores_real: Tensor) -> Tensor:
    """mean D(fake) - mean D(real); the critic minimizes this."""
    return ad.sub(ad.mean(scores_fake), ad.mean(scores_real))


def gradient_penalty(critic: Callable[..., Tensor], x_real: Tensor, x_fake: Tensor,
                     y: tuple, rng: np.random.Generator) -> Tensor:
    """Mean squared deviation of the interpolate gradient norm from 1.

    One uniform u per sample mixes real and fake fire maps; the critic's
    conditions ``y`` are held fixed. The gradient norm is taken over all
    pixels of each sample's interpolated map, and the result remains
    differentiable w.r.t. the critic parameters.
    """
    if x_real.shape != x_fake.shape:
        raise ad.ShapeError(f"gradient_penalty shape mismatch: {x_real.shape} vs {x_fake.shape}")
    n = x_real.shape[0]
    u = rng.uniform(0.0, 1.0, size=(n,) + (1,) * (x_real.ndim - 1)).astype(x_real.dtype)
    mixed = u * x_real.data + (1.0 - u) * x_fake.data
    x_int = Tensor(mixed, requires_grad=True, name="gp_interpolate")
    scores = critic(x_int, *y)
    if scores.shape != (n,):
        raise ad.ShapeError(f"critic must return per-sample scores, got {scores.shape}")
    gx = ad.grad(ad.sum_(scores), [x_int], create_graph=True)[0]
    axes = tuple(range(1, x_real.ndim))
    norms = ad.sqrt(ad.sum_(ad.square(gx), axis=axes))
    return ad.mean(ad.square(ad.add_const(norms, -1.0)))


def discriminator_loss(l_wgan: Tensor, l_gp: Tensor, w_gp: float) -> Tensor:
    if w_gp < 0:
        raise ValueError("w_gp must be nonnegative")
    return ad.add(l_wgan, ad.scale(l_gp, w_gp))
