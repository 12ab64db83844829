"""Closed-form identities for every objective term."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from firecast import autodiff as ad
from firecast.autodiff import Tensor, finite_difference_check, grad
from firecast.losses import (
    DICE_EPS,
    LossWeights,
    adversarial_loss,
    dice_loss,
    discriminator_loss,
    generator_loss,
    gradient_penalty,
    l1_loss,
    wasserstein_loss,
)

PAPER_WEIGHTS = LossWeights()  # 1.0 / 20 / 0.3 / 10


def T(x):
    return Tensor(np.asarray(x, dtype=np.float64))


def test_default_weights_are_paper_values():
    w = LossWeights()
    assert (w.w_adv, w.w_l1, w.w_dice, w.w_gp) == (1.0, 20.0, 0.3, 10.0)


# ---------------------------------------------------------------------------
# adversarial / L1
# ---------------------------------------------------------------------------


def test_adversarial_single_score():
    assert adversarial_loss(T([5.0])).item() == -5.0


def test_adversarial_symmetric_pair():
    assert adversarial_loss(T([1.0, -1.0])).item() == 0.0


def test_adversarial_hand_mean():
    assert adversarial_loss(T([2.0, 4.0, 6.0])).item() == pytest.approx(-4.0)


def test_l1_identity_and_offset():
    x = T(np.random.default_rng(0).random((4, 4)))
    assert l1_loss(x, x).item() == 0.0
    assert l1_loss(T(np.ones((3, 3))), T(np.zeros((3, 3)))).item() == 1.0


def test_l1_hand_value():
    assert l1_loss(T([0.0, 0.5]), T([1.0, 0.5])).item() == pytest.approx(0.5)


def test_l1_shape_mismatch():
    with pytest.raises(ad.ShapeError):
        l1_loss(T(np.zeros(3)), T(np.zeros(4)))


# ---------------------------------------------------------------------------
# Dice
# ---------------------------------------------------------------------------


def test_dice_perfect_binary_overlap():
    x = T(np.array([1.0, 1.0, 0.0, 0.0]))
    assert dice_loss(x, x).item() == pytest.approx(0.0, abs=1e-7)


def test_dice_disjoint_masks_close_to_one():
    x = T([1.0, 0.0])
    y = T([0.0, 1.0])
    expected = 1.0 - DICE_EPS / (2.0 + DICE_EPS)
    assert dice_loss(x, y).item() == pytest.approx(expected, abs=1e-6)


def test_dice_all_zero_is_zero():
    z = T(np.zeros(5))
    assert dice_loss(z, z).item() == pytest.approx(0.0, abs=1e-12)


@given(hnp.arrays(np.float64, (4, 4), elements=st.floats(0, 1)),
       hnp.arrays(np.float64, (4, 4), elements=st.floats(0, 1)))
@settings(max_examples=100, deadline=None)
def test_dice_range_property(a, b):
    v = dice_loss(T(a), T(b)).item()
    assert -1e-6 <= v <= 1.0 + 1e-6


# ---------------------------------------------------------------------------
# composites
# ---------------------------------------------------------------------------


def test_generator_composite_fixture():
    # (-1, 0.1, 0.2) with weights (1.0, 20, 0.3): -1 + 2 + 0.06 = 1.06
    v = generator_loss(T(-1.0), T(0.1), T(0.2), PAPER_WEIGHTS)
    assert v.item() == pytest.approx(1.06, abs=1e-9)


def test_generator_zero_cases():
    assert generator_loss(T(0.0), T(0.0), T(0.0), PAPER_WEIGHTS).item() == 0.0
    zero_w = LossWeights(w_adv=0, w_l1=0, w_dice=0, w_gp=0)
    assert generator_loss(T(-3.0), T(9.0), T(1.0), zero_w).item() == 0.0


def test_generator_loss_linear_in_weights():
    w2 = LossWeights(w_adv=2.0, w_l1=40.0, w_dice=0.6, w_gp=10)
    a = generator_loss(T(-1.0), T(0.1), T(0.2), PAPER_WEIGHTS).item()
    b = generator_loss(T(-1.0), T(0.1), T(0.2), w2).item()
    assert b == pytest.approx(2 * a, rel=1e-12)


def test_discriminator_composite_fixture():
    # (-2, 0.5) with w_GP = 10: -2 + 5 = 3
    assert discriminator_loss(T(-2.0), T(0.5), 10.0).item() == pytest.approx(3.0, abs=1e-12)
    assert discriminator_loss(T(-2.0), T(0.0), 10.0).item() == -2.0
    assert discriminator_loss(T(-2.0), T(0.5), 0.0).item() == -2.0


def test_wasserstein_cases():
    assert wasserstein_loss(T([3.0, 3.0]), T([3.0, 3.0])).item() == 0.0
    assert wasserstein_loss(T([1.0]), T([3.0])).item() == pytest.approx(-2.0)
    a, b = T([0.3, 1.7]), T([-0.4, 2.2])
    assert wasserstein_loss(a, b).item() == pytest.approx(-wasserstein_loss(b, a).item())


# ---------------------------------------------------------------------------
# gradient penalty
# ---------------------------------------------------------------------------


def linear_critic(weight: np.ndarray):
    w = Tensor(weight, requires_grad=True)

    def critic(candidate, *conds):
        n = candidate.shape[0]
        flat = ad.reshape(candidate, (n, -1))
        return ad.reshape(ad.matmul(flat, ad.reshape(w, (-1, 1))), (n,))

    return critic, w


def test_gp_unit_norm_linear_critic_is_zero():
    w = np.zeros((1, 4, 4))
    w[0, 0, 0] = 1.0  # ||w|| = 1
    critic, _ = linear_critic(w.reshape(-1))
    rng = np.random.default_rng(0)
    x = rng.random((3, 1, 4, 4))
    y = rng.random((3, 1, 4, 4))
    gp = gradient_penalty(critic, Tensor(x), Tensor(y), (), rng)
    assert abs(gp.item()) <= 1e-8


def test_gp_norm_three_linear_critic_is_four():
    w = np.zeros(16)
    w[3] = 3.0  # ||w|| = 3
    critic, _ = linear_critic(w)
    rng = np.random.default_rng(1)
    x = rng.random((4, 1, 4, 4))
    y = rng.random((4, 1, 4, 4))
    gp = gradient_penalty(critic, Tensor(x), Tensor(y), (), rng)
    assert gp.item() == pytest.approx(4.0, abs=1e-8)


def test_gp_constant_critic_is_one():
    def critic(candidate, *conds):
        n = candidate.shape[0]
        return ad.mul(ad.mean(ad.reshape(candidate, (n, -1)), axis=1),
                      Tensor(np.zeros(n)))

    rng = np.random.default_rng(2)
    x = rng.random((2, 1, 3, 3))
    gp = gradient_penalty(critic, Tensor(x), Tensor(x * 0.5), (), rng)
    assert gp.item() == pytest.approx(1.0, abs=1e-12)


def test_gp_nonnegative_property():
    rng = np.random.default_rng(3)
    for trial in range(5):
        w = rng.standard_normal(9)
        critic, _ = linear_critic(w)
        x = rng.random((3, 1, 3, 3))
        gp = gradient_penalty(critic, Tensor(x), Tensor(rng.random((3, 1, 3, 3))), (), rng)
        assert gp.item() >= 0.0


def test_gp_param_gradient_matches_fd_small_nonlinear_critic():
    # conv -> leaky_relu -> conv critic, well under 500 parameters
    rng = np.random.default_rng(4)
    w1_0 = (rng.standard_normal((3, 1, 3, 3)) * 0.6)
    w2_0 = (rng.standard_normal((1, 3, 3, 3)) * 0.6)
    x_real = rng.random((2, 1, 5, 5))
    x_fake = rng.random((2, 1, 5, 5))

    def penalty_of(flat):
        w1 = ad.reshape(ad.narrow(flat, 0, 0, 27), (3, 1, 3, 3))
        w2 = ad.reshape(ad.narrow(flat, 0, 27, 27), (1, 3, 3, 3))

        def critic(candidate, *conds):
            h = ad.leaky_relu(ad.conv2d(candidate, w1, padding=1), 0.2)
            return ad.mean(ad.conv2d(h, w2, padding=1), axis=(1, 2, 3))

        return gradient_penalty(critic, Tensor(x_real), Tensor(x_fake), (),
                                np.random.default_rng(99))

    flat0 = np.concatenate([w1_0.reshape(-1), w2_0.reshape(-1)])
    assert flat0.size <= 500
    err = finite_difference_check(penalty_of, flat0, h=1e-5)
    assert err <= 1e-3


def test_gp_shape_mismatch():
    rng = np.random.default_rng(0)
    critic, _ = linear_critic(np.ones(4))
    with pytest.raises(ad.ShapeError):
        gradient_penalty(critic, Tensor(np.zeros((2, 1, 2, 2))),
                         Tensor(np.zeros((2, 1, 3, 3))), (), rng)
