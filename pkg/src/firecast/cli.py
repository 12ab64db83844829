"""Command-line surface: simulate, build-dataset, train, predict, evaluate,
selfcheck, and an end-to-end smoke pipeline.

Exit codes: 0 success, 1 usage error, 2 data/validation error, 3 numeric
failure (NaN abort). Stages communicate only through their directory
layouts, and every artifact directory gets a ``resolved_config.json``.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import NumericsError, Tensor, finite_difference_check
from .config import ConfigError, RunConfig, resolve_config
from .dataset import (
    DatasetError,
    FireDataset,
    build_index,
    write_pgm,
    write_scenario_dir,
)
from .evaluation import (
    aggregate,
    boundary_stats,
    evaluate_models,
    predict_cgan,
    predict_persistence,
    write_metrics_csv,
)
from .inference import burn_probability, rollout
from .losses import (
    LossWeights,
    dice_loss,
    discriminator_loss,
    generator_loss,
    gradient_penalty,
)
from .metrics import bmae, masked_mse, ssim_masked
from .model import Critic, Generator, ModelConfig, ae_config, desk_config, paper_config
from .oracle import OracleError, SpreadConstants, build_environment, sample_scenario, simulate_arrival
from .params import load_params
from .training import AETrainer, TrainConfig, Trainer

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

HORIZON_NAMES = ("4h", "8h", "12h")


def model_config_for(cfg: RunConfig) -> ModelConfig:
    return desk_config() if cfg.scale == "desk" else paper_config()


def train_config_for(cfg: RunConfig) -> TrainConfig:
    return TrainConfig(batch_size=cfg.batch_size, g_steps=cfg.g_steps,
                       n_critic=cfg.n_critic, lr=cfg.lr, beta1=cfg.beta1,
                       beta2=cfg.beta2, seed=cfg.seed,
                       checkpoint_every=cfg.checkpoint_every,
                       weights=cfg.loss_weights())


def spread_constants_for(cfg: RunConfig) -> SpreadConstants:
    return SpreadConstants(base_ros=cfg.base_ros)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_simulate(cfg: RunConfig, out: Path) -> int:
    """Run oracle scenarios and write one directory per simulation."""
    out.mkdir(parents=True, exist_ok=True)
    constants = spread_constants_for(cfg)
    for i in range(cfg.scenarios):
        scenario_seed = int(np.random.SeedSequence([cfg.seed, 733, i]).generate_state(1)[0])
        spec = sample_scenario(scenario_seed, grid_size=cfg.grid,
                               cell_size_m=cfg.cell_size_m)
        env = build_environment(spec.terrain_seed, cfg.grid, cfg.cell_size_m)
        field = simulate_arrival(spec, env, constants)
        write_scenario_dir(out / f"scn_{i:05d}", spec, env, field)
    cfg.write_resolved(out)
    print(f"simulated {cfg.scenarios} scenarios -> {out}")
    return EXIT_OK


def cmd_build_dataset(cfg: RunConfig, data: Path) -> int:
    index = build_index(data, train_fraction=cfg.train_fraction,
                        seed=cfg.seed, margin_cells=cfg.margin_cells)
    cfg.write_resolved(data)
    print(f"indexed {index['retained']}/{index['total_simulated']} scenarios "
          f"({index['dropped_out_of_bounds']} crossed the boundary)")
    return EXIT_OK


def cmd_train(cfg: RunConfig, data: Path, out: Path, model: str) -> int:
    train_ds = FireDataset.load(data, "train")
    out.mkdir(parents=True, exist_ok=True)
    tcfg = train_config_for(cfg)
    if model == "cgan":
        trainer = Trainer(train_ds, model_config_for(cfg), tcfg, out_dir=out)
        trainer.train(log_path=out / "train_log.csv")
        print(f"trained cgan for {trainer.g_updates} generator steps "
              f"({trainer.d_updates} critic steps) -> {out}")
    elif model == "ae":
        trainer = AETrainer(train_ds, model_config_for(cfg), tcfg, out_dir=out)
        trainer.train(log_path=out / "ae_log.csv")
        print(f"trained ae baseline for {trainer.updates} steps -> {out}")
    else:
        raise ConfigError(f"unknown model {model!r}; expected cgan or ae")
    cfg.write_resolved(out)
    return EXIT_OK


def _load_generator(cfg: RunConfig, ckpt: Path, ae: bool = False) -> Generator:
    mcfg = model_config_for(cfg)
    if ae:
        mcfg = ae_config(mcfg)
    G = Generator(mcfg, seed=cfg.seed)
    state = load_params(ckpt / "G.json")
    G.load_state_dict(state)
    return G


def cmd_predict(cfg: RunConfig, data: Path, ckpt: Path, scenario: str,
                out: Path, save_members: bool) -> int:
    # the scenario may come from either split
    root = Path(data)
    index = json.loads((root / "index.json").read_text())
    splits = {e["dir"]: e["split"] for e in index["scenarios"]}
    if scenario not in splits:
        raise DatasetError(f"scenario {scenario!r} not in dataset index")
    ds = FireDataset.load(root, splits[scenario])
    rec = next(r for r in ds.records if r.scenario_id == scenario)

    G = _load_generator(cfg, ckpt)
    conds = [ds.pair_condition(rec, k) for k in range(3)]
    result = rollout(G, rec.s0, rec.terrain, conds, n_ensemble=cfg.ensemble,
                     master_seed=cfg.seed, jobs=cfg.jobs)

    out.mkdir(parents=True, exist_ok=True)
    summary = {"scenario": scenario, "master_seed": cfg.seed,
               "n_ensemble": cfg.ensemble, "threshold": cfg.threshold,
               "horizons_hours": [4, 8, 12], "steps": []}
    for k, bundle in enumerate(result.bundles):
        name = HORIZON_NAMES[k]
        write_pgm(out / f"mean_{name}.pgm", bundle.mean)
        prob = burn_probability(bundle, cfg.threshold)
        write_pgm(out / f"prob_{name}.pgm", prob)
        if save_members:
            for i, member in enumerate(bundle.members):
                write_pgm(out / f"member_{name}_{i}.pgm", member)
        summary["steps"].append({
            "horizon": name,
            "member_seeds": bundle.member_seeds,
            "burned_fraction_mean": float((bundle.mean >= cfg.threshold).mean()),
        })
    (out / "summary.json").write_text(json.dumps(summary, indent=1))
    cfg.write_resolved(out)
    print(f"predicted {scenario} -> {out}")
    return EXIT_OK


def cmd_evaluate(cfg: RunConfig, data: Path, ckpt: Path | None,
                 ae_ckpt: Path | None, out: Path) -> int:
    test_ds = FireDataset.load(data, "test")
    predictors = {"persistence": predict_persistence}
    if ckpt is not None:
        G = _load_generator(cfg, ckpt)
        predictors["cgan"] = lambda rec: predict_cgan(
            G, test_ds, rec, cfg.ensemble, master_seed=cfg.seed, jobs=cfg.jobs)
    if ae_ckpt is not None:
        A = _load_generator(cfg, ae_ckpt, ae=True)
        ae_like = AETrainer(test_ds, model_config_for(cfg), train_config_for(cfg))
        ae_like.model = A
        predictors["ae"] = lambda rec: [ae_like.predict_horizon(rec, k) for k in range(3)]

    rows = evaluate_models(test_ds, predictors, tau=cfg.threshold)
    out.mkdir(parents=True, exist_ok=True)
    write_metrics_csv(rows, out / "metrics.csv")
    report = {"aggregates": aggregate(rows),
              "boundary_px": boundary_stats(test_ds, predictors, tau=cfg.threshold),
              "samples": len(test_ds.records)}
    (out / "aggregates.json").write_text(json.dumps(report, indent=1, sort_keys=True))
    cfg.write_resolved(out)
    print(f"evaluated {len(test_ds.records)} held-out scenarios -> {out}")
    return EXIT_OK


def cmd_selfcheck() -> int:
    """Finite-difference and closed-form loss verification suites."""
    rng = np.random.default_rng(0)
    failures = []

    def check(name, ok):
        print(f"  [{'ok' if ok else 'FAIL'}] {name}")
        if not ok:
            failures.append(name)

    print("finite-difference gradient checks (64-bit):")
    conv_w = Tensor(rng.standard_normal((3, 2, 3, 3)))
    dense_w = Tensor(rng.standard_normal((4, 2)))
    cases = {
        "conv2d": lambda t: ad.mean(ad.square(ad.conv2d(t, conv_w, padding=1))),
        "dense": lambda t: ad.mean(ad.square(ad.matmul(t, dense_w))),
        "leaky_relu": lambda t: ad.mean(ad.leaky_relu(t, 0.2)),
        "sigmoid": lambda t: ad.mean(ad.sigmoid(t)),
        "tanh": lambda t: ad.mean(ad.tanh(t)),
        "sqrt": lambda t: ad.mean(ad.sqrt(ad.add_const(ad.square(t), 1.0))),
        "mean+square": lambda t: ad.mean(ad.square(t)),
    }
    for name, fn in cases.items():
        shape = (2, 2, 5, 5) if name == "conv2d" else (3, 4)
        err = finite_difference_check(fn, rng.standard_normal(shape) + 0.7, h=1e-5)
        check(f"{name}: rel err {err:.2e}", err <= 1e-4)

    print("closed-form loss identities:")
    w = LossWeights()
    g = generator_loss(Tensor(-1.0), Tensor(0.1), Tensor(0.2), w)
    check("composite generator loss fixture = 1.06", abs(g.item() - 1.06) <= 1e-9)
    d = discriminator_loss(Tensor(-2.0), Tensor(0.5), w.w_gp)
    check("composite critic loss fixture = 3", abs(d.item() - 3.0) <= 1e-12)
    x = Tensor(np.array([1.0, 0.0]))
    y = Tensor(np.array([0.0, 1.0]))
    check("disjoint dice ~ 1", abs(dice_loss(x, y).item() - 1.0) <= 1e-6)

    wvec = np.zeros(16)
    wvec[5] = 3.0
    wt = Tensor(wvec, requires_grad=True)

    def lin_critic(c, *args):
        return ad.reshape(ad.matmul(ad.reshape(c, (c.shape[0], -1)),
                                    ad.reshape(wt, (-1, 1))), (c.shape[0],))

    gp = gradient_penalty(lin_critic, Tensor(rng.random((2, 1, 4, 4))),
                          Tensor(rng.random((2, 1, 4, 4))), (), rng)
    check("gradient penalty ||w||=3 -> 4", abs(gp.item() - 4.0) <= 1e-8)

    a = rng.random((16, 16))
    check("masked MSE identity", masked_mse(a + 0.2, a + 0.2).value == 0.0)
    check("masked SSIM identity", abs(ssim_masked(a + 0.2, a + 0.2).value - 1.0) <= 1e-9)
    check("BMAE identity", bmae(a + 0.2, a + 0.2).value == 0.0)

    if failures:
        print(f"selfcheck FAILED: {failures}")
        return EXIT_NUMERIC
    print("selfcheck passed")
    return EXIT_OK


def cmd_pipeline_smoke(cfg: RunConfig, out: Path) -> dict:
    """simulate -> build-dataset -> short train -> predict -> evaluate."""
    stage = "simulate"
    try:
        data = out / "scenarios"
        cmd_simulate(cfg, data)
        stage = "build-dataset"
        cmd_build_dataset(cfg, data)
        stage = "train"
        run_dir = out / "run"
        cmd_train(cfg, data, run_dir, "cgan")
        ae_dir = out / "run_ae"
        cmd_train(cfg, data, ae_dir, "ae")
        stage = "predict"
        index = json.loads((data / "index.json").read_text())
        test_ids = [e["dir"] for e in index["scenarios"] if e["split"] == "test"]
        cmd_predict(cfg, data, run_dir / "ckpt_final", test_ids[0],
                    out / "prediction", save_members=False)
        stage = "evaluate"
        eval_dir = out / "evaluation"
        cmd_evaluate(cfg, data, run_dir / "ckpt_final", ae_dir / "ckpt_final", eval_dir)
    except Exception as exc:
        raise RuntimeError(f"smoke pipeline failed at stage {stage!r}: {exc}") from exc

    report = json.loads((eval_dir / "aggregates.json").read_text())
    report["stages"] = ["simulate", "build-dataset", "train", "predict", "evaluate"]
    report["seed"] = cfg.seed
    (out / "report.json").write_text(json.dumps(report, indent=1, sort_keys=True))
    print(f"smoke pipeline complete -> {out / 'report.json'}")
    return report


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


class UsageError(Exception):
    pass


def build_parser() -> _Parser:
    parser = _Parser(prog="firecast", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=Path, help="config file (JSON or key=value)")
        p.add_argument("--seed", type=int)
        p.add_argument("--scale", choices=("desk", "paper"))
        p.add_argument("--ensemble", type=int)
        p.add_argument("--threshold", type=float)
        p.add_argument("--jobs", type=int)
        p.add_argument("--out", type=Path)

    p = sub.add_parser("simulate", help="run oracle fire simulations")
    common(p)
    p.add_argument("--count", type=int, help="number of scenarios")

    p = sub.add_parser("build-dataset", help="filter, split, and index scenarios")
    common(p)
    p.add_argument("--data", type=Path, required=True)

    p = sub.add_parser("train", help="train the cgan or the ae baseline")
    common(p)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--model", choices=("cgan", "ae"), default="cgan")
    p.add_argument("--g-steps", type=int, dest="g_steps")
    p.add_argument("--batch", type=int, dest="batch_size")

    p = sub.add_parser("predict", help="ensemble rollout for one scenario")
    common(p)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--ckpt", type=Path, required=True)
    p.add_argument("--scenario", required=True)
    p.add_argument("--members", action="store_true", help="also save member frames")

    p = sub.add_parser("evaluate", help="masked metrics on the held-out split")
    common(p)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--ckpt", type=Path, help="cgan checkpoint dir")
    p.add_argument("--ae-ckpt", type=Path, dest="ae_ckpt")

    p = sub.add_parser("selfcheck", help="gradient and loss verification suites")

    p = sub.add_parser("smoke", help="end-to-end pipeline on a small preset")
    common(p)
    p.add_argument("--count", type=int)
    p.add_argument("--g-steps", type=int, dest="g_steps")

    return parser


_SMOKE_DEFAULTS = dict(scenarios=40, g_steps=25, batch_size=4,
                       checkpoint_every=0, ensemble=3)


def _resolve(args, extra_overrides=None) -> RunConfig:
    overrides = {
        "seed": getattr(args, "seed", None),
        "scale": getattr(args, "scale", None),
        "ensemble": getattr(args, "ensemble", None),
        "threshold": getattr(args, "threshold", None),
        "jobs": getattr(args, "jobs", None),
        "scenarios": getattr(args, "count", None),
        "g_steps": getattr(args, "g_steps", None),
        "batch_size": getattr(args, "batch_size", None),
    }
    merged = dict(extra_overrides or {})
    for k, v in overrides.items():
        if v is not None:
            merged[k] = v
    return resolve_config(getattr(args, "config", None), merged)


def run(argv) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    try:
        if args.command == "selfcheck":
            return cmd_selfcheck()

        if args.command == "simulate":
            cfg = _resolve(args)
            if args.out is None:
                raise UsageError("simulate requires --out")
            return cmd_simulate(cfg, args.out)

        if args.command == "build-dataset":
            cfg = _resolve(args)
            return cmd_build_dataset(cfg, args.data)

        if args.command == "train":
            cfg = _resolve(args)
            if args.out is None:
                raise UsageError("train requires --out")
            return cmd_train(cfg, args.data, args.out, args.model)

        if args.command == "predict":
            cfg = _resolve(args)
            if args.out is None:
                raise UsageError("predict requires --out")
            return cmd_predict(cfg, args.data, args.ckpt, args.scenario,
                               args.out, args.members)

        if args.command == "evaluate":
            cfg = _resolve(args)
            if args.out is None:
                raise UsageError("evaluate requires --out")
            if args.ckpt is None and args.ae_ckpt is None:
                raise UsageError("evaluate requires --ckpt and/or --ae-ckpt")
            return cmd_evaluate(cfg, args.data, args.ckpt, args.ae_ckpt, args.out)

        if args.command == "smoke":
            cfg = _resolve(args, extra_overrides=_SMOKE_DEFAULTS)
            if args.out is None:
                raise UsageError("smoke requires --out")
            cmd_pipeline_smoke(cfg, args.out)
            return EXIT_OK

        raise UsageError(f"unknown command {args.command!r}")
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericsError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, DatasetError, OracleError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except RuntimeError as exc:
        # smoke-stage failures carry the stage name
        print(f"error: {exc}", file=sys.stderr)
        cause = exc.__cause__
        if isinstance(cause, NumericsError):
            return EXIT_NUMERIC
        return EXIT_DATA


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
