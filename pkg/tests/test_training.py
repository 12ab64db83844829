"""Training-loop contracts: isolation, accounting, checkpoints, learning."""

import numpy as np
import pytest

from firecast import autodiff as ad
from firecast.autodiff import AdamState, Tensor, adam_step, grad, no_grad
from firecast.losses import LossWeights, gradient_penalty, wasserstein_loss
from firecast.model import Critic, desk_config
from firecast.training import AETrainer, TrainConfig, Trainer

CFG = dict(batch_size=4, n_critic=2, seed=0, checkpoint_every=0)


def snapshot(model):
    return {k: v.data.copy() for k, v in model.params.items()}


def changed(model, before):
    return any(not np.array_equal(model.params[k].data, before[k]) for k in before)


# ---------------------------------------------------------------------------
# isolation and accounting
# ---------------------------------------------------------------------------


def test_critic_step_updates_only_critic(tiny_dataset):
    tr = Trainer(tiny_dataset, desk_config(), TrainConfig(**CFG))
    g_before, d_before = snapshot(tr.G), snapshot(tr.D)
    tr.critic_step()
    assert changed(tr.D, d_before)
    assert not changed(tr.G, g_before)


def test_generator_step_updates_only_generator(tiny_dataset):
    tr = Trainer(tiny_dataset, desk_config(), TrainConfig(**CFG))
    g_before, d_before = snapshot(tr.G), snapshot(tr.D)
    tr.generator_step()
    assert changed(tr.G, g_before)
    assert not changed(tr.D, d_before)


def test_generator_step_leaves_critic_trainable(tiny_dataset):
    tr = Trainer(tiny_dataset, desk_config(), TrainConfig(**CFG))
    tr.generator_step()
    assert all(p.requires_grad for p in tr.D.param_list())


def test_n_critic_accounting(tiny_dataset):
    tr = Trainer(tiny_dataset, desk_config(), TrainConfig(**CFG))
    tr.train(g_steps=3)
    assert tr.g_updates == 3
    assert tr.d_updates == 3 * 2  # n_critic = 2
    assert len(tr.history) == 3


def test_zero_steps_initial_checkpoint_only(tiny_dataset, tmp_path):
    tr = Trainer(tiny_dataset, desk_config(),
                 TrainConfig(batch_size=4, n_critic=2, seed=0, checkpoint_every=5),
                 out_dir=tmp_path)
    hist = tr.train(g_steps=0)
    assert hist == []
    assert not (tmp_path / "ckpt_0").exists()  # no steps -> nothing written


def test_every_parameter_receives_gradient(tiny_dataset):
    # after one training step the zero-initialized FiLM output layers have
    # moved, so every subnetwork is live; then inspect gradient norms
    tr = Trainer(tiny_dataset, desk_config(), TrainConfig(**CFG))
    tr.critic_step()
    tr.generator_step()
    fire, terrain, cond, target = tr._batch_tensors()
    z = tr._noise(4)
    x_hat = tr.G.forward(fire, terrain, cond, z, training=True)
    scores, _ = tr.D.forward(x_hat, fire, terrain, cond)
    from firecast.losses import (adversarial_loss, dice_loss, generator_loss, l1_loss)
    l_g = generator_loss(adversarial_loss(scores), l1_loss(target, x_hat),
                         dice_loss(target, x_hat), LossWeights())
    g_grads = grad(l_g, tr.G.param_list())
    names = list(tr.G.params)
    dead = [names[i] for i, g in enumerate(g_grads) if np.linalg.norm(g.data) == 0.0]
    assert dead == []

    d_grads = grad(l_g, tr.D.param_list())
    d_names = list(tr.D.params)
    d_dead = [d_names[i] for i, g in enumerate(d_grads) if np.linalg.norm(g.data) == 0.0]
    assert d_dead == []


# ---------------------------------------------------------------------------
# spec'd loss behaviors
# ---------------------------------------------------------------------------


def test_constant_critic_with_zero_gp_weight_gives_zero_loss(tiny_dataset):
    tr = Trainer(tiny_dataset, desk_config(), TrainConfig(**CFG))
    for p in tr.D.param_list():
        p.data[...] = 0.0
    fire, terrain, cond, target = tr._batch_tensors()
    scores_f, _ = tr.D.forward(target, fire, terrain, cond)
    scores_r, _ = tr.D.forward(target, fire, terrain, cond)
    l = wasserstein_loss(scores_f, scores_r)
    assert l.item() == 0.0


def test_critic_learns_to_separate_fixed_batch():
    # frozen random generator output vs real target, 50 critic updates
    rng = np.random.default_rng(0)
    cfg = desk_config()
    D = Critic(cfg, seed=1)
    n = cfg.grid
    real = Tensor(rng.random((2, 1, n, n), dtype=np.float32))
    fake = Tensor(rng.random((2, 1, n, n), dtype=np.float32))
    fire = Tensor(rng.random((2, 1, n, n), dtype=np.float32))
    terr = Tensor(rng.random((2, 3, n, n), dtype=np.float32))
    cond = Tensor(rng.standard_normal((2, 21)).astype(np.float32))
    adam = AdamState(lr=1e-4, beta1=0.5, beta2=0.9)
    gp_rng = np.random.default_rng(1)

    history = []
    for _ in range(50):
        sf, _ = D.forward(fake, fire, terr, cond)
        sr, _ = D.forward(real, fire, terr, cond)
        l_wgan = wasserstein_loss(sf, sr)

        def critic_fn(c, f_, t_, co):
            return D.forward(c, f_, t_, co)[0]

        gp = gradient_penalty(critic_fn, real, fake, (fire, terr, cond), gp_rng)
        loss = ad.add(l_wgan, ad.scale(gp, 10.0))
        gs = grad(loss, D.param_list())
        adam_step(D.param_list(), gs, adam)
        history.append(l_wgan.item())

    assert history[-1] < history[0]
    assert np.mean(history[-5:]) < np.mean(history[:5])


def test_pure_l1_training_decreases_loss(tiny_dataset):
    cfg = TrainConfig(batch_size=4, n_critic=1, seed=3, checkpoint_every=0,
                      weights=LossWeights(w_adv=0.0, w_l1=1.0, w_dice=0.0, w_gp=10.0))
    tr = Trainer(tiny_dataset, desk_config(), cfg)
    losses = []
    for _ in range(200):
        _, _, l1, _ = tr.generator_step()
        losses.append(l1)
    # the identity-start head begins at persistence-level error; overfitting
    # a 6-scenario fixture must still clearly reduce it
    assert np.mean(losses[-20:]) < 0.8 * np.mean(losses[:20])


def test_null_objective_keeps_parameters(tiny_dataset):
    cfg = TrainConfig(batch_size=4, n_critic=1, seed=3, checkpoint_every=0,
                      weights=LossWeights(w_adv=0.0, w_l1=0.0, w_dice=0.0, w_gp=0.0))
    tr = Trainer(tiny_dataset, desk_config(), cfg)
    before = snapshot(tr.G)
    out = tr.generator_step()
    assert out[0] == 0.0
    assert not changed(tr.G, before)


@pytest.mark.filterwarnings("ignore:invalid value")
@pytest.mark.filterwarnings("ignore:overflow")
def test_nan_loss_aborts(tiny_dataset):
    tr = Trainer(tiny_dataset, desk_config(), TrainConfig(**CFG))
    tr.G.params["head.w"].data[...] = np.inf
    with pytest.raises(ad.NumericsError):
        tr.generator_step()


# ---------------------------------------------------------------------------
# determinism and checkpoints
# ---------------------------------------------------------------------------


def test_same_seed_identical_loss_logs(tiny_dataset):
    a = Trainer(tiny_dataset, desk_config(), TrainConfig(**CFG)).train(g_steps=2)
    b = Trainer(tiny_dataset, desk_config(), TrainConfig(**CFG)).train(g_steps=2)
    assert a == b


def test_checkpoint_roundtrip_one_step_equivalence(tiny_dataset, tmp_path):
    cfg = TrainConfig(batch_size=4, n_critic=2, seed=5, checkpoint_every=0)
    a = Trainer(tiny_dataset, desk_config(), cfg)
    a.train(g_steps=2)
    a.save_checkpoint(tmp_path / "ck")
    direct = a.train(g_steps=1)[-1]

    b = Trainer(tiny_dataset, desk_config(), cfg)
    b.load_checkpoint(tmp_path / "ck")
    assert b.g_updates == 2
    resumed = b.train(g_steps=1)[-1]
    assert direct == resumed


def test_checkpoint_preserves_parameters_bitwise(tiny_dataset, tmp_path):
    cfg = TrainConfig(**CFG)
    a = Trainer(tiny_dataset, desk_config(), cfg)
    a.train(g_steps=1)
    a.save_checkpoint(tmp_path / "ck")
    b = Trainer(tiny_dataset, desk_config(), cfg)
    b.load_checkpoint(tmp_path / "ck")
    for k in a.G.params:
        assert a.G.params[k].data.tobytes() == b.G.params[k].data.tobytes()
    for k in a.D.params:
        assert a.D.params[k].data.tobytes() == b.D.params[k].data.tobytes()
    for k in a.G.buffers:
        assert a.G.buffers[k].data.tobytes() == b.G.buffers[k].data.tobytes()


def test_log_csv_schema(tiny_dataset, tmp_path):
    tr = Trainer(tiny_dataset, desk_config(), TrainConfig(**CFG))
    tr.train(g_steps=2, log_path=tmp_path / "log.csv")
    lines = (tmp_path / "log.csv").read_text().strip().splitlines()
    assert lines[0] == "step,L_D,L_WGAN,L_GP,L_G,L_adv,L_L1,L_Dice"
    assert len(lines) == 3
    for line in lines[1:]:
        values = line.split(",")[1:]
        assert all(np.isfinite(float(v)) for v in values)


# ---------------------------------------------------------------------------
# AE baseline
# ---------------------------------------------------------------------------


def test_ae_zero_step_training_is_evaluable(tiny_dataset):
    ae = AETrainer(tiny_dataset, desk_config(), TrainConfig(**CFG))
    ae.train(steps=0)
    rec = tiny_dataset.records[0]
    pred = ae.predict_horizon(rec, 2)
    assert pred.shape == rec.frames[2].shape
    assert np.all(np.isfinite(pred))


def test_ae_loss_decreases(tiny_dataset):
    ae = AETrainer(tiny_dataset, desk_config(),
                   TrainConfig(batch_size=4, n_critic=1, seed=2, checkpoint_every=0))
    rows = ae.train(steps=150)
    losses = [r["L_MSE"] for r in rows]
    assert np.mean(losses[-15:]) < np.mean(losses[:15])


def test_ae_deterministic(tiny_dataset):
    a = AETrainer(tiny_dataset, desk_config(), TrainConfig(**CFG)).train(steps=3)
    b = AETrainer(tiny_dataset, desk_config(), TrainConfig(**CFG)).train(steps=3)
    assert a == b
