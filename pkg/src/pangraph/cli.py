"""``pangraph`` command-line entry point.

Exit codes: 0 ok, 2 config error, 3 IO error, 4 numeric failure.
Set ``PANGRAPH_VERBOSITY`` to ``quiet``, ``info`` (default) or ``debug``.
Results go to stdout and output files; timestamps only ever reach ``run.log``.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import container
from .experiments import (BENCHMARK_SEEDS, SUMMARY_HEADER, ablation_grid, dataset_dims, run, summarize,
                          training_key)
from .gradcheck import ARCHITECTURES, check_model
from .models import build_model, count_parameters, micro_config
from .sampling import even_sample, guided_sample
from .synth import generate, ingest_grid, ingest_skeleton, load_dataset
from .tensor import NumericError
from .trainer import CSV_HEADER, evaluate, train

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4
VERBOSITY = {"quiet": logging.WARNING, "0": logging.WARNING, "info": logging.INFO, "1": logging.INFO,
             "debug": logging.DEBUG, "2": logging.DEBUG}

log = logging.getLogger("pangraph")


class NumericFailure(Exception):
    pass


def _setup_logging() -> None:
    level = VERBOSITY.get(os.environ.get("PANGRAPH_VERBOSITY", "info").lower(), logging.INFO)
    log.handlers.clear()
    log.setLevel(logging.DEBUG)
    log.propagate = False
    console = logging.StreamHandler(sys.stderr)
    console.setLevel(level)
    console.setFormatter(logging.Formatter("%(message)s"))
    log.addHandler(console)


def _log_to_file(out_dir: Path) -> None:
    handler = logging.FileHandler(out_dir / "run.log", mode="w")
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
    log.addHandler(handler)


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    _log_to_file(out)
    return out


def _echo_config(out: Path, run_cfg: cfgmod.RunConfig) -> None:
    (out / "config.txt").write_text(run_cfg.text())
    (out / "config.sha256").write_text(f"{run_cfg.digest()}  config.txt\n")


def _load_run(args, dataset=None, model_base: dict | None = None) -> cfgmod.RunConfig:
    """File keys, then ``--set`` overrides; data-fixed model keys come from ``dataset`` unless given."""
    base = dict(model_base or {})
    if dataset is not None:
        base.update(dataset_dims(dataset))
    run_cfg, _ = cfgmod.load(args.config, args.set, base)
    return run_cfg


def cmd_generate(args) -> int:
    run_cfg = _load_run(args)
    out = _out_dir(args.out)
    generate(run_cfg.data, out)
    _echo_config(out, run_cfg)
    log.info("wrote %d samples to %s", run_cfg.data.num_classes * run_cfg.data.per_class, out)
    return EXIT_OK


def cmd_sample(args) -> int:
    grid = ingest_grid(args.grid, args.patch_size, args.height, args.width)
    if args.strategy == "guided":
        if args.skeleton is None:
            raise cfgmod.ConfigError("strategy=guided needs --skeleton")
        tokens = guided_sample(grid, ingest_skeleton(args.skeleton))
    else:
        tokens = even_sample(grid, args.persons, args.joints, args.even_mode)
    container.write(args.out, tokens.data)
    log.info("sampled tokens %s -> %s", list(tokens.data.shape), args.out)
    return EXIT_OK


def _train_one(model_cfg, dataset, train_cfg, out: Path, run_cfg: cfgmod.RunConfig):
    result = train(model_cfg, dataset, train_cfg)
    (out / "metrics.csv").write_text(result.csv())
    container.save_checkpoint(out / "checkpoint", result.best_state, run_cfg.text())
    if result.best_eval is not None:
        _write_confusion(out / "confusion.csv", result.best_eval.confusion)
    return result


def _write_confusion(path: Path, cm: np.ndarray) -> None:
    path.write_text("\n".join(",".join(str(v) for v in row) for row in cm) + "\n")


def cmd_train(args) -> int:
    dataset = load_dataset(args.data)
    run_cfg = _load_run(args, dataset)
    out = _out_dir(args.out)
    _echo_config(out, run_cfg)
    result = _train_one(run_cfg.model, dataset, run_cfg.train, out, run_cfg)
    print(f"best epoch {result.best_epoch} val top1 {result.best_val:.6f}")
    return EXIT_OK


def _load_checkpoint(path):
    state, text, _ = container.load_checkpoint(path)
    run_cfg = cfgmod.resolve(cfgmod.parse_pairs(text, f"{path}/config.txt"))
    model = build_model(run_cfg.model)
    model.load_state_dict(state)
    return model, run_cfg


def cmd_eval(args) -> int:
    model, run_cfg = _load_checkpoint(args.checkpoint)
    dataset = load_dataset(args.data)
    ev = evaluate(model, run_cfg.model, dataset, args.split, run_cfg.train)
    print(CSV_HEADER)
    print(ev.row.csv())
    print("confusion (rows: true class, columns: predicted)")
    for row in ev.confusion:
        print(",".join(str(v) for v in row))
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    run_cfg = _load_run(args, model_base=micro_config().to_dict())
    targets = {name: run_cfg.model.replace(**changes) for name, changes in ARCHITECTURES.items()} if args.all \
        else {"config": run_cfg.model}
    failed = False
    for name, model_cfg in targets.items():
        report = check_model(model_cfg, eps=args.eps, tol=args.tol, max_entries=args.max_entries)
        status = "ok" if report.ok else "FAIL"
        print(f"{name}: {status} max_rel_error {report.max_rel_error:.3e} over {len(report.params)} tensors")
        for p in report.failures:
            print(f"  {p.name}: max_rel_error {p.max_rel_error:.3e} > {args.tol:g}")
        failed |= not report.ok
    if failed:
        raise NumericFailure("gradient check failed")
    return EXIT_OK


def cmd_params(args) -> int:
    run_cfg = _load_run(args)
    total, parts = count_parameters(run_cfg.model)
    print(f"total {total}")
    for name, n in parts.items():
        print(f"{name} {n}")
    return EXIT_OK


def cmd_ablate(args) -> int:
    dataset = load_dataset(args.data)
    run_cfg = _load_run(args, dataset)
    out = _out_dir(args.out)
    _echo_config(out, run_cfg)
    seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else list(BENCHMARK_SEEDS)
    rows, done = [], {}
    for name, model_cfg in ablation_grid(run_cfg.model):
        for seed in seeds:
            key = (training_key(model_cfg).digest(), seed)
            if key not in done:
                log.info("ablation %s/%s seed %d", name, model_cfg.sampling, seed)
                cfg = model_cfg.replace(seed=seed)
                train_cfg = dataclasses.replace(run_cfg.train, seed=seed)
                done[key] = run(name, cfg, dataset, train_cfg)
                (out / f"metrics_{name}_{model_cfg.sampling}_{seed}.csv").write_text(done[key].result.csv())
            s = done[key]
            rows.append(summarize(name, model_cfg, seed, s.evaluation, dataset.spec, s.best_epoch))
    text = "\n".join([SUMMARY_HEADER] + [r.csv() for r in rows]) + "\n"
    (out / "ablation.csv").write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_attnmaps(args) -> int:
    model, run_cfg = _load_checkpoint(args.checkpoint)
    dataset = load_dataset(args.data)
    if args.sample_id not in dataset.ids:
        raise cfgmod.ConfigError(f"unknown sample id {args.sample_id!r}")
    encoder = getattr(model, "encoder", None) or getattr(getattr(model, "rgb", None), "encoder", None)
    if encoder is None or encoder.calib is None:
        raise cfgmod.ConfigError("checkpoint has no calibration module to visualize")
    model.eval()
    batch = dataset.batch([dataset.ids.index(args.sample_id)], run_cfg.model.t_skel)
    maps = encoder.attention_maps(batch).data[0]
    container.write(args.out, maps)
    print(f"attention maps {list(maps.shape)} (frames, heads, persons*joints, grid tokens) -> {args.out}")
    return EXIT_OK


def _add_config(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config key (repeatable; wins over the file)")


def build_parser() -> argparse.ArgumentParser:
    keys = "\n".join(f"  {k}" for k in cfgmod.all_keys())
    parser = argparse.ArgumentParser(
        prog="pangraph", formatter_class=argparse.RawDescriptionHelpFormatter,
        description="Human-centric visual token graphs: data, training and analysis commands.",
        epilog=f"config keys:\n{keys}\n\nexit codes: 0 ok, 2 config, 3 IO, 4 numeric\n"
               "env: PANGRAPH_VERBOSITY=quiet|info|debug")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic dataset")
    _add_config(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("sample", help="sample joint tokens from a token-grid file")
    p.add_argument("--grid", required=True)
    p.add_argument("--skeleton", help="2-D skeleton file (guided only)")
    p.add_argument("--strategy", choices=("guided", "even"), default="guided")
    p.add_argument("--out", required=True)
    p.add_argument("--patch-size", type=int, default=1)
    p.add_argument("--height", type=int)
    p.add_argument("--width", type=int)
    p.add_argument("--persons", type=int, default=1)
    p.add_argument("--joints", type=int, default=17)
    p.add_argument("--even-mode", choices=("linear", "nearest"), default="linear")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("train", help="train one model; writes metrics.csv and a best-val checkpoint")
    _add_config(p)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint on a split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="val", choices=("train", "val"))
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference check of a model config (micro shapes)")
    _add_config(p)
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--max-entries", type=int, default=6, help="entries probed per tensor")
    p.add_argument("--all", action="store_true", help="check every architecture variant")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("params", help="print total and per-module parameter counts")
    _add_config(p)
    p.set_defaults(func=cmd_params)

    p = sub.add_parser("ablate", help="train the variant x sampling grid and write ablation.csv")
    _add_config(p)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seeds", help="comma-separated seeds (default 42,43,44)")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("attnmaps", help="dump calibration attention maps for one sample")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--sample-id", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_attnmaps)
    return parser


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (container.ContainerError, OSError) as exc:
        log.error("io error: %s", exc)
        return EXIT_IO
    except (NumericError, NumericFailure, FloatingPointError) as exc:
        log.error("numeric failure: %s", exc)
        return EXIT_NUMERIC
    except (ValueError, KeyError) as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    finally:
        for h in list(log.handlers):
            if isinstance(h, logging.FileHandler):
                h.close()
                log.removeHandler(h)


if __name__ == "__main__":
    sys.exit(main())
