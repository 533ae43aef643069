"""Desk-scale benchmark settings and the ablation grid shared by the CLI, tests and demos."""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .models import ModelConfig, count_parameters, ensemble_from_paths
from .synth import Dataset, SynthSpec, spatial_class_ids, temporal_class_ids
from .trainer import Evaluation, TrainConfig, TrainResult, evaluate, train

# Widths sized so one 15-epoch run fits a few minutes on one core.
BENCHMARK_WIDTHS = dict(c_r=32, heads=4, rgb_block_inputs=(32, 32, 32, 64, 64),
                        skel_block_outputs=(16, 16, 16, 32, 32), skel_head_outputs=(32, 32, 64, 64, 64))
BENCHMARK_SEEDS = (42, 43, 44)

ABLATIONS = {
    "full": {},
    "no-calibration": {"no_calibration": True},
    "no-gc": {"no_gc": True},
    "no-tc": {"no_tc": True},
    "no-pan": {"no_pan": True},
}
SAMPLINGS = ("guided", "even")


def topology_for(joints: int) -> str:
    return {17: "coco17", 25: "ntu25"}.get(joints, f"chain{joints}")


def dataset_dims(spec: SynthSpec | Dataset) -> dict:
    """Model keys fixed by the data: classes, channels, joints, persons, frame counts."""
    return dict(num_classes=spec.num_classes, in_channels=spec.channels, joints=spec.joints, persons=spec.persons,
                topology=topology_for(spec.joints), t_rgb=spec.frames, t_skel=2 * spec.frames)


def benchmark_model(data: SynthSpec | Dataset, **changes) -> ModelConfig:
    base = dict(dataset_dims(data), **BENCHMARK_WIDTHS)
    base.update(changes)
    return ModelConfig(**base)


@dataclass
class RunSummary:
    name: str
    model_cfg: ModelConfig
    seed: int
    evaluation: Evaluation
    temporal_top1: float
    spatial_top1: float
    params: int
    best_epoch: int
    seconds: float
    result: TrainResult | None = None

    @property
    def top1(self) -> float:
        return self.evaluation.row.top1

    @property
    def mca(self) -> float:
        return self.evaluation.row.mca

    def csv(self) -> str:
        return (f"{self.name},{self.model_cfg.sampling},{self.seed},{self.top1:.6f},{self.mca:.6f},"
                f"{self.temporal_top1:.6f},{self.spatial_top1:.6f},{self.params},{self.best_epoch}")


SUMMARY_HEADER = "variant,sampling,seed,val_top1,val_mca,temporal_top1,spatial_top1,params,best_epoch"


def summarize(name: str, model_cfg: ModelConfig, seed: int, ev: Evaluation, spec: SynthSpec | None,
              best_epoch: int = -1, seconds: float = 0.0, result: TrainResult | None = None) -> RunSummary:
    temporal = ev.accuracy_on(temporal_class_ids(spec)) if spec is not None else float("nan")
    spatial = ev.accuracy_on(spatial_class_ids(spec)) if spec is not None else float("nan")
    return RunSummary(name, model_cfg, seed, ev, temporal, spatial, count_parameters(model_cfg)[0], best_epoch,
                      seconds, result)


def run(name: str, model_cfg: ModelConfig, dataset: Dataset, train_cfg: TrainConfig, on_epoch=None) -> RunSummary:
    """Train, then score the best-validation weights on the validation split."""
    start = time.perf_counter()
    result = train(model_cfg, dataset, train_cfg, on_epoch=on_epoch)
    result.model.load_state_dict(result.best_state)
    ev = evaluate(result.model, model_cfg, dataset, "val", train_cfg)
    return summarize(name, model_cfg, train_cfg.seed, ev, dataset.spec, result.best_epoch,
                     time.perf_counter() - start, result)


def run_ensemble(rgb: RunSummary, skel: RunSummary, dataset: Dataset, train_cfg: TrainConfig) -> RunSummary:
    """Score late fusion of two separately trained pathways."""
    cfg = rgb.model_cfg.replace(variant="ensemble")
    model = ensemble_from_paths(cfg, rgb.result.best_state, skel.result.best_state)
    ev = evaluate(model, cfg, dataset, "val", train_cfg)
    return summarize("ensemble", cfg, rgb.seed, ev, dataset.spec)


def ablation_grid(base: ModelConfig, variants=tuple(ABLATIONS), samplings=SAMPLINGS) -> list[tuple[str, ModelConfig]]:
    return [(name, base.replace(sampling=sampling, **ABLATIONS[name])) for name in variants for sampling in samplings]


def training_key(cfg: ModelConfig) -> ModelConfig:
    """``no-pan`` never reads tokens, so its sampling setting cannot change a run."""
    return cfg.replace(sampling="guided") if cfg.no_pan else cfg


def mean_by(rows: list[RunSummary], attr: str) -> float:
    return float(np.mean([getattr(r, attr) for r in rows]))
