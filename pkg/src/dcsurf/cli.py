"""Command-line front end: configs in, CSV/JSON/SVG artifacts out.

Exit codes: 0 success, 2 configuration error, 3 runtime or training error,
4 I/O error. Every command takes --config (JSON, strict schema) and --out;
flags override the corresponding config keys one to one.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from .config import (
    CONFIG_KEYS,
    ConfigError,
    ExperimentConfig,
    config_to_dict,
    default_config,
    dump_config,
    load_config,
)
from .constraints import mesh_violations
from .datasets import (
    grid_manifest,
    load_quotes_csv,
    penalty_mesh,
    synth_in_sample,
    synth_out_sample,
    write_quotes_csv,
)
from .experiments import (
    CONDITIONS,
    OracleSurface,
    aggregate_csv,
    bench,
    bench_csv,
    bench_summary,
    eval_metrics,
    matrix_csv,
    profile_csv,
    risk_profiles,
    run_matrix,
)
from .network import load_checkpoint, save_checkpoint
from .plots import history_svg, matrix_svg, mesh_violation_svg, profile_svg
from .training import TrainingError, history_csv, save_history, train


def _epilog() -> str:
    lines = ["configuration keys (JSON, strict schema; unknown keys are rejected):"]
    lines += [f"  {key:24s} {text}" for key, text in CONFIG_KEYS.items()]
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON experiment config")
    common.add_argument("--out", metavar="DIR", help="output directory (default: config out_dir)")
    common.add_argument("--seed", type=int, help="override train.seed")
    common.add_argument("--jobs", type=int, default=1, help="parallel worker bound for matrix cells")
    common.add_argument(
        "--mode",
        choices=("mlp", "dcnn"),
        help="mlp trains with the penalty multipliers zeroed; on evaluate it only tags the rows",
    )

    parser = argparse.ArgumentParser(
        prog="dcsurf",
        description="Arbitrage-consistent option premium surfaces.",
        epilog=_epilog(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", parents=[common], help="write synthetic dataset CSVs + manifest")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", parents=[common], help="train one model; checkpoint + history")
    p.add_argument("--data", metavar="PATH", help="quotes CSV (default: synthesize from config)")
    p.add_argument("--epochs", type=int, help="override train.epochs")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", parents=[common], help="score a checkpoint against truth grids")
    p.add_argument("--checkpoint", metavar="PATH", help="model checkpoint JSON")
    p.add_argument("--oracle", action="store_true", help="score the generating pricer instead")
    p.add_argument("--data", metavar="PATH", help="in-sample quotes CSV (default: synthesize)")
    p.add_argument("--profiles", action="store_true", help="also emit risk-profile CSV/SVG")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("matrix", parents=[common], help="condition x seed x mode sweep")
    p.add_argument("--seeds", type=int, metavar="N", help="run N paired seeds 0..N-1")
    p.set_defaults(func=cmd_matrix)

    p = sub.add_parser("profiles", parents=[common], help="risk-profile slices of a surface")
    p.add_argument("--checkpoint", metavar="PATH", help="model checkpoint JSON")
    p.add_argument("--oracle", action="store_true", help="profile the generating pricer instead")
    p.set_defaults(func=cmd_profiles)

    p = sub.add_parser("bench", parents=[common], help="penalized vs plain training timings")
    p.add_argument("--repeats", type=int, default=3, help="timed repeats per cell")
    p.add_argument("--epochs", type=int, default=200, help="epochs per timed run")
    p.set_defaults(func=cmd_bench)

    return parser


def _prepare(args) -> tuple[ExperimentConfig, Path]:
    cfg = load_config(args.config) if args.config else default_config()
    train_cfg = cfg.train
    penalty = cfg.penalty
    # plain mode drops the penalty from training only; evaluation keeps the
    # configured magnitudes so scores stay comparable across both modes
    if getattr(args, "mode", None) == "mlp" and args.command == "train":
        penalty = dataclasses.replace(penalty, m_k=0.0, m_kk=0.0, m_tau=0.0, self_adaptive=False, eta_m=0.0)
    if getattr(args, "seed", None) is not None:
        train_cfg = dataclasses.replace(train_cfg, seed=args.seed)
    if getattr(args, "epochs", None) is not None and args.command == "train":
        train_cfg = dataclasses.replace(train_cfg, epochs=args.epochs)
    train_cfg = dataclasses.replace(train_cfg, penalty=penalty)
    out_dir = args.out or cfg.out_dir
    cfg = dataclasses.replace(cfg, train=train_cfg, penalty=penalty, out_dir=out_dir)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return cfg, out


def _mesh_csv(mesh: np.ndarray, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["moneyness", "tau"])
        for m, t in mesh:
            writer.writerow(["%.17g" % m, "%.17g" % t])


def cmd_generate(args) -> int:
    cfg, out = _prepare(args)
    train_grid = synth_in_sample(cfg.sabr, cfg.grid)
    dense = synth_out_sample(cfg.sabr)
    mesh = penalty_mesh()

    write_quotes_csv(train_grid, out / "in_sample.csv")
    write_quotes_csv(dense, out / "out_sample.csv")
    _mesh_csv(mesh, out / "mesh.csv")
    manifest = {
        "config": config_to_dict(cfg),
        "in_sample": grid_manifest(train_grid, cfg.grid, seed=cfg.train.seed),
        "out_sample": grid_manifest(dense),
        "mesh": {"points": int(mesh.shape[0])},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    dump_config(cfg, out / "config.json")
    print(f"wrote {len(train_grid)} in-sample and {len(dense)} out-of-sample quotes to {out}")
    return 0


def _load_or_synth(cfg: ExperimentConfig, data_path) -> object:
    if data_path:
        return load_quotes_csv(data_path)
    return synth_in_sample(cfg.sabr, cfg.grid)


def cmd_train(args) -> int:
    cfg, out = _prepare(args)
    grid = _load_or_synth(cfg, args.data)
    mesh = penalty_mesh()
    try:
        report = train(grid, mesh, cfg.train, rate=cfg.sabr.r)
    except TrainingError as exc:
        diag = {
            "error": str(exc),
            "epoch": exc.epoch,
            "e_mse": None if np.isnan(exc.e_mse) else exc.e_mse,
            "e_penalty": None if np.isnan(exc.e_penalty) else exc.e_penalty,
        }
        (out / "diagnostics.json").write_text(json.dumps(diag, indent=2) + "\n")
        print(f"training failed: {exc}", file=sys.stderr)
        return 3

    # the echo omits out_dir: where a run landed is not part of its identity
    echo = config_to_dict(cfg)
    del echo["out_dir"]
    save_checkpoint(report.params, out / "checkpoint.json", seed=cfg.train.seed, extra={"config": echo})
    history_csv(report, out / "history.csv")
    save_history(report, out / "report.json")
    history_svg(report.history_epochs, report.history, out / "history.svg")
    final = report.history[-1]
    print(
        f"trained {report.epochs_run} epochs in {report.seconds:.1f}s: "
        f"e_mse={final.e_mse:.3e} e_penalty={final.e_penalty:.3e}"
    )
    return 0


def _load_model(args, cfg: ExperimentConfig):
    if args.oracle:
        return OracleSurface(cfg.sabr), "oracle"
    if not args.checkpoint:
        raise ConfigError("provide --checkpoint PATH or --oracle")
    params, _meta = load_checkpoint(args.checkpoint)
    return params, Path(args.checkpoint).stem


def cmd_evaluate(args) -> int:
    cfg, out = _prepare(args)
    model, tag = _load_model(args, cfg)
    mesh = penalty_mesh()
    model_tag = args.mode or "dcnn"

    in_grid = _load_or_synth(cfg, args.data)
    truth = synth_out_sample(cfg.sabr)
    rows = [
        eval_metrics(
            model, in_grid, mesh, cfg.penalty,
            sample="in", condition=tag, seed=cfg.train.seed, model_tag=model_tag, rate=cfg.sabr.r,
        ),
        eval_metrics(
            model, truth, mesh, cfg.penalty,
            sample="out", condition=tag, seed=cfg.train.seed, model_tag=model_tag, rate=cfg.sabr.r,
        ),
    ]
    matrix_csv(rows, out / "metrics.csv")
    (out / "metrics.json").write_text(
        json.dumps([dataclasses.asdict(r) for r in rows], indent=2) + "\n"
    )
    for row in rows:
        sig = "-" if row.e_mse_sigma is None else f"{row.e_mse_sigma:.4e}"
        print(
            f"{row.sample:3s}: e_mse={row.e_mse:.4e} e_penalty={row.e_penalty:.4e} "
            f"e_mse_sigma={sig} invalid_iv={row.invalid_iv}"
        )

    if args.profiles:
        _emit_profiles(model, tag, out)
        if isinstance(model, OracleSurface):
            signed = None
        else:
            signed = mesh_violations(model, mesh, cfg.penalty, rate=cfg.sabr.r)
        if signed is not None:
            mesh_violation_svg(mesh, signed, out / "profiles" / f"{tag}_mesh.svg")
    return 0


def _emit_profiles(model, tag: str, out: Path) -> None:
    profile = risk_profiles(model)
    profile_csv(profile, out / "profiles" / f"{tag}.csv")
    profile_svg(profile, out / "profiles" / f"{tag}.svg")
    print(f"profiles written under {out / 'profiles'}")


def cmd_profiles(args) -> int:
    cfg, out = _prepare(args)
    model, tag = _load_model(args, cfg)
    _emit_profiles(model, tag, out)
    return 0


def cmd_matrix(args) -> int:
    cfg, out = _prepare(args)
    seeds = tuple(range(args.seeds)) if args.seeds else cfg.seeds
    rows = run_matrix(CONDITIONS, seeds, cfg.train, base=cfg.sabr, jobs=max(1, args.jobs))
    matrix_csv(rows, out / "matrix.csv")
    aggregate_csv(rows, out / "matrix_agg.csv")
    matrix_svg(rows, out / "matrix.svg")
    failed = [r for r in rows if r.status != "ok"]
    print(f"matrix: {len(rows)} rows, {len(failed)} failed, written to {out}")
    if failed:
        for row in failed[:5]:
            print(f"  {row.condition} seed={row.seed} {row.model}: {row.status}", file=sys.stderr)
        return 3
    return 0


def cmd_bench(args) -> int:
    cfg, out = _prepare(args)
    rows = bench(
        archs=(cfg.train.architecture,),
        activations=(cfg.train.activation,),
        repeats=args.repeats,
        epochs=args.epochs,
        seed=cfg.train.seed,
        base=cfg.sabr,
    )
    bench_csv(rows, out / "bench.csv")
    for entry in bench_summary(rows):
        print(
            f"{entry['arch']} {entry['activation']} ({entry['n_params']} params): "
            f"mlp {entry['mlp_mean_s']:.3f}s dcnn {entry['dcnn_mean_s']:.3f}s "
            f"ratio {entry['ratio']:.2f}"
        )
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 4
    except (TrainingError, FloatingPointError, ValueError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
