"""Command-line entry point.

Subcommands: gen-synth, benchmark, verify-theorem, gap-shift, probe, sweep.
Every run writes its resolved configuration next to its outputs so results
can be reproduced bit-for-bit.  Exit codes: 0 success, 2 usage/config
error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import errors
from .data_io import SyntheticConfig, gen_synthetic, load_dataset, save_dataset
from .diagnostics import gap_sweep, visual_probe
from .episodes import BenchmarkConfig, run_benchmark, sample_episode
from .gradients import (
    build_theorem_report,
    residual_ratio_suite,
    same_class_positivity_suite,
)
from .losses import LossConfig
from .trainer import TrainConfig, disturb_phase_variant, train_episode

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

SVL_FLAG_MAP = {
    "off": "off",
    "ours": "class_shuffle",
    "neg-lv": "neg_lv",
    "noise-proto": "noise_proto",
}
RA_FLAG_MAP = {
    "off": "off",
    "ours": "fused",
    "only-vision": "only_vision",
    "only-text": "only_text",
}


def _default_parallel() -> int:
    try:
        return max(1, int(os.environ.get("XMOD_ALIGN_THREADS", "1")))
    except ValueError:
        return 1


def _write_config(out_dir: Path, config: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    plain = {
        k: v for k, v in config.items()
        if isinstance(v, (str, int, float, bool, type(None)))
    }
    (out_dir / "config.json").write_text(
        json.dumps(plain, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def _add_episode_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--n", type=int, default=5, help="classes per episode")
    p.add_argument("--k", type=int, default=1, help="support shots per class")
    p.add_argument("--m", type=int, default=15, help="query samples per class")


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--lambda", dest="lam", type=float, default=0.1)
    p.add_argument("--beta", type=float, default=3.0)
    p.add_argument("--tau", type=float, default=0.01)
    p.add_argument("--tau-ra", type=float, default=1.0)
    p.add_argument("--epochs", type=int, default=250)
    p.add_argument("--init-epochs", type=int, default=150)
    p.add_argument("--eta", type=float, default=5e-2)
    p.add_argument("--rank", type=int, default=4)
    p.add_argument("--branch", choices=("visual", "text", "both"), default="visual")
    p.add_argument("--svl", choices=sorted(SVL_FLAG_MAP), default="ours")
    p.add_argument("--ra", choices=sorted(RA_FLAG_MAP), default="ours")
    p.add_argument(
        "--phase", choices=("default", "no", "begin", "middle", "last", "all"),
        default="default",
        help="auxiliary-loss window override",
    )


def _train_config_from_args(args) -> TrainConfig:
    loss = LossConfig(
        tau=args.tau,
        tau_ra=args.tau_ra,
        lam=args.lam,
        beta=args.beta,
        svl_strategy=SVL_FLAG_MAP[args.svl],
        ra_strategy=RA_FLAG_MAP[args.ra],
    )
    cfg = TrainConfig(
        eta=args.eta,
        epochs=args.epochs,
        init_epochs=args.init_epochs,
        loss=loss,
        rank=args.rank,
        branch=args.branch,
    )
    if args.phase != "default":
        cfg = disturb_phase_variant(cfg, args.phase)
    return cfg


def cmd_gen_synth(args) -> int:
    cfg = SyntheticConfig(
        num_classes=args.classes,
        per_class=args.per_class,
        dim=args.dim,
        noise_sigma=args.sigma,
        gap_magnitude=args.gap,
        rotation_angle=args.rot,
        seed=args.seed,
    )
    ds = gen_synthetic(cfg)
    save_dataset(ds, args.out)
    _write_config(Path(args.out), {"command": "gen-synth", **vars(args)})
    print(f"wrote {ds.count} samples, {ds.num_classes} classes to {args.out}")
    return EXIT_OK


def _resolved_benchmark_dict(args) -> dict:
    keys = (
        "data", "n", "k", "m", "tasks", "lam", "beta", "tau", "tau_ra",
        "epochs", "init_epochs", "eta", "rank", "branch", "svl", "ra",
        "phase", "seed", "zero_shot", "gap_metric",
    )
    return {"command": "benchmark", **{k: getattr(args, k) for k in keys}}


def cmd_benchmark(args) -> int:
    if args.config:
        stored = json.loads(Path(args.config).read_text(encoding="utf-8"))
        for key, value in stored.items():
            if key != "command" and hasattr(args, key):
                setattr(args, key, value)
    dataset = load_dataset(args.data)
    train_cfg = _train_config_from_args(args)
    bench = BenchmarkConfig(
        n_way=args.n,
        k_shot=args.k,
        m_query=args.m,
        task_count=args.tasks,
        master_seed=args.seed,
        train=not args.zero_shot,
        compute_gap=args.gap_metric,
    )
    result = run_benchmark(dataset, bench, train_cfg, parallel=args.parallel)

    out = Path(args.out)
    _write_config(out, _resolved_benchmark_dict(args))
    lines = [
        f"tasks={result.task_count}",
        f"mean_acc={result.mean:.2f}",
        f"ci95={result.ci95:.2f}",
    ]
    if result.gap_mean is not None:
        lines.append(f"mean_gap={result.gap_mean:.6f}")
    (out / "summary.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    with open(out / "tasks.txt", "w", encoding="utf-8") as fh:
        for idx, acc in enumerate(result.accuracies):
            gap = "" if result.gaps is None else f" {result.gaps[idx]:.6f}"
            fh.write(f"{idx} {acc:.2f}{gap}\n")
    print(f"mean accuracy {result.mean:.2f} +- {result.ci95:.2f} "
          f"over {result.task_count} tasks")
    if result.gap_mean is not None:
        print(f"mean gap {result.gap_mean:.6f}")
    return EXIT_OK


def cmd_verify_theorem(args) -> int:
    rng = np.random.default_rng(args.seed)
    out = Path(args.out)
    _write_config(out, {"command": "verify-theorem", **vars(args)})

    f = rng.standard_normal((args.n, args.dim))
    t = rng.standard_normal((args.n, args.dim))
    f /= np.linalg.norm(f, axis=1, keepdims=True)
    t /= np.linalg.norm(t, axis=1, keepdims=True)
    labels = np.arange(args.n)
    report = build_theorem_report(f, t, labels, args.eta, args.tau)
    with open(out / "report.txt", "w", encoding="utf-8") as fh:
        fh.write("i k same_class actual predicted residual\n")
        for pair in report.pairs:
            fh.write(
                f"{pair.i} {pair.k} {int(pair.same_class)} "
                f"{pair.delta_cos_actual:.12e} {pair.delta_cos_predicted:.12e} "
                f"{pair.residual:.3e}\n"
            )

    if args.eta == 0.0:
        # every update is a no-op; the residual suites are meaningless
        (out / "suites.txt").write_text("skipped=eta_is_zero\n", encoding="utf-8")
        print("eta=0: all cosine shifts are exactly 0; suites skipped")
        return EXIT_OK

    ratios = residual_ratio_suite(rng, instances=args.instances, eta=args.eta,
                                  tau=args.tau)
    positives = same_class_positivity_suite(rng, instances=args.instances,
                                            eta=args.eta, tau=args.tau)
    ratio_ok = all(0.15 <= r <= 0.35 for r in ratios)
    positive_ok = all(v > 0 for v in positives)
    with open(out / "suites.txt", "w", encoding="utf-8") as fh:
        fh.write(f"residual_ratio_min={min(ratios):.6f}\n")
        fh.write(f"residual_ratio_max={max(ratios):.6f}\n")
        fh.write(f"residual_ratio_ok={ratio_ok}\n")
        fh.write(f"same_class_min_predicted={min(positives):.6e}\n")
        fh.write(f"same_class_positivity_ok={positive_ok}\n")
    print(f"residual ratios in [{min(ratios):.3f}, {max(ratios):.3f}]; "
          f"same-class minimum {min(positives):.3e}")
    if not (ratio_ok and positive_ok):
        print("theorem invariants violated", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_gap_shift(args) -> int:
    dataset = load_dataset(args.data)
    alphas = np.round(
        np.arange(args.alpha_min, args.alpha_max + args.alpha_step / 2,
                  args.alpha_step), 10,
    )
    report = gap_sweep(
        dataset.features, dataset.labels, dataset.text_features, alphas,
        args.tau,
    )
    out = Path(args.out)
    _write_config(out, {"command": "gap-shift", **vars(args)})
    with open(out / "gap_report.txt", "w", encoding="utf-8") as fh:
        fh.write(f"gap_norm={report.gap_norm:.6f}\n")
        fh.write(f"gap={report.gap:.6f}\n")
        fh.write(f"alpha_star={report.alpha_star:.4f}\n")
        fh.write(f"acc_gap_summary={report.summary_line()}\n")
        fh.write("# alpha loss\n")
        for a, l in zip(report.alphas, report.losses):
            fh.write(f"{a:.4f} {l:.8f}\n")
        fh.write("# alpha acc\n")
        for a, acc in zip(report.alphas, report.accuracies):
            fh.write(f"{a:.4f} {acc:.4f}\n")
    print(f"Acc / Gap: {report.summary_line()} (alpha* = {report.alpha_star:.2f})")
    return EXIT_OK


def cmd_probe(args) -> int:
    dataset = load_dataset(args.data)
    rng = np.random.default_rng(args.seed)
    episode = sample_episode(dataset, args.n, args.k, args.m, rng)
    text = dataset.text_features[episode.class_ids]
    train_cfg = replace(_train_config_from_args(args), record_snapshots=True,
                        seed=args.seed)
    _, trajectory = train_episode(
        episode.support_x, episode.support_y, text, train_cfg
    )
    report = visual_probe(
        trajectory, episode.support_x, episode.support_y, text,
        tau=args.tau, probe_steps=args.probe_steps, eta_probe=args.eta_probe,
    )
    out = Path(args.out)
    _write_config(out, {"command": "probe", **vars(args)})
    with open(out / "probe.txt", "w", encoding="utf-8") as fh:
        fh.write("epoch vlm_before vlm_after delta\n")
        for rec in report.records:
            fh.write(
                f"{rec.epoch} {rec.vlm_before:.8f} {rec.vlm_after:.8f} "
                f"{rec.delta_vlm:.8f}\n"
            )
        fh.write(
            f"# fraction_negative_first_half="
            f"{report.fraction_negative(first_half_only=True):.4f}\n"
        )
    print(
        f"loss drop on {report.fraction_negative():.0%} of snapshots "
        f"({report.fraction_negative(first_half_only=True):.0%} in first half)"
    )
    return EXIT_OK


def cmd_sweep(args) -> int:
    dataset = load_dataset(args.data)
    lambdas = [float(v) for v in args.lambdas.split(",")]
    betas = [float(v) for v in args.betas.split(",")]
    out = Path(args.out)
    _write_config(out, {"command": "sweep", **vars(args)})
    rows = []
    for lam in lambdas:
        for beta in betas:
            args.lam, args.beta = lam, beta
            train_cfg = _train_config_from_args(args)
            bench = BenchmarkConfig(
                n_way=args.n, k_shot=args.k, m_query=args.m,
                task_count=args.tasks, master_seed=args.seed,
            )
            result = run_benchmark(dataset, bench, train_cfg,
                                   parallel=args.parallel)
            rows.append((lam, beta, result.mean, result.ci95))
            print(f"lambda={lam} beta={beta}: "
                  f"{result.mean:.2f} +- {result.ci95:.2f}")
    with open(out / "sweep.txt", "w", encoding="utf-8") as fh:
        fh.write("lambda beta mean_acc ci95\n")
        for lam, beta, mean, ci in rows:
            fh.write(f"{lam} {beta} {mean:.2f} {ci:.2f}\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="xmod-align", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synth", help="generate a synthetic dataset")
    p.add_argument("--classes", type=int, default=20)
    p.add_argument("--per-class", type=int, default=40)
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--sigma", type=float, default=0.25)
    p.add_argument("--gap", type=float, default=0.8)
    p.add_argument("--rot", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_synth)

    p = sub.add_parser("benchmark", help="run an episode benchmark")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--tasks", type=int, default=800)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--zero-shot", action="store_true")
    p.add_argument("--gap-metric", action="store_true")
    p.add_argument("--parallel", type=int, default=_default_parallel())
    p.add_argument("--config", help="load a stored config.json instead of flags")
    _add_episode_flags(p)
    _add_train_flags(p)
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("verify-theorem", help="first-order cosine-shift checks")
    p.add_argument("--out", required=True)
    p.add_argument("--instances", type=int, default=50)
    p.add_argument("--n", type=int, default=5)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--eta", type=float, default=1e-3)
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_verify_theorem)

    p = sub.add_parser("gap-shift", help="gap-shift sweep over a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--alpha-min", type=float, default=-1.0)
    p.add_argument("--alpha-max", type=float, default=1.5)
    p.add_argument("--alpha-step", type=float, default=0.05)
    p.add_argument("--tau", type=float, default=0.01)
    p.set_defaults(func=cmd_gap_shift)

    p = sub.add_parser("probe", help="visual-learning loss-drop probe")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--probe-steps", type=int, default=10)
    p.add_argument("--eta-probe", type=float, default=1e-2)
    _add_episode_flags(p)
    _add_train_flags(p)
    p.set_defaults(func=cmd_probe)

    p = sub.add_parser("sweep", help="lambda/beta hyperparameter grid")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--tasks", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lambdas", default="0,0.01,0.1,0.5,1")
    p.add_argument("--betas", default="0,0.5,1,3,5")
    p.add_argument("--parallel", type=int, default=_default_parallel())
    _add_episode_flags(p)
    _add_train_flags(p)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, errors.NonPositiveTemperatureError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (
        FileNotFoundError,
        errors.FormatVersionMismatchError,
        errors.ChecksumMismatchError,
        errors.TruncatedFileError,
        errors.LabelOutOfRangeError,
        errors.InsufficientClassesError,
        errors.InsufficientSamplesError,
        errors.AnchorRejectionExhaustedError,
    ) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (
        errors.NonFiniteGradientError,
        errors.NonFiniteLossError,
        errors.ZeroVectorError,
        FloatingPointError,
    ) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
