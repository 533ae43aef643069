"""Central finite-difference verification of analytic gradients."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from . import tensor as T
from .rng import Rng
from .tensor import GradientTape, Parameter, Tensor, backward


@dataclass
class ParamReport:
    name: str
    checked: int
    max_rel_error: float
    kinks: int = 0

    def passed(self, tol: float) -> bool:
        return self.max_rel_error <= tol


@dataclass
class GradcheckReport:
    eps: float
    tol: float
    params: list[ParamReport] = field(default_factory=list)

    @property
    def max_rel_error(self) -> float:
        return max((p.max_rel_error for p in self.params), default=0.0)

    @property
    def failures(self) -> list[ParamReport]:
        return [p for p in self.params if not p.passed(self.tol)]

    @property
    def ok(self) -> bool:
        return not self.failures


def rel_error(analytic, numeric, floor: float = 1e-6) -> np.ndarray:
    """Elementwise ``|a - n| / max(|a|, |n|, floor)``."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)


def gradcheck(loss_fn: Callable[[], Tensor], params: Iterable[Tensor], *, eps: float = 1e-5,
              tol: float = 1e-4, max_entries: int | None = None, seed: int = 0,
              floor: float = 1e-6) -> GradcheckReport:
    """Compare tape gradients of ``loss_fn()`` with central differences.

    ``loss_fn`` must rebuild the computation from the current parameter values
    on every call. When ``max_entries`` is set, that many entries per tensor are
    probed (chosen by a seeded stream); otherwise every entry is.

    An entry that fails while its one-sided slopes disagree (a ReLU/max kink
    inside the ``±eps`` bracket) is re-probed with the step shrunk tenfold, up
    to twice. A wrong analytic gradient fails at every step size.
    """
    params = list(params)
    for p in params:
        p.grad = np.zeros_like(p.data)
    with GradientTape() as tape:
        loss = loss_fn()
    backward(loss, tape)
    analytic = [p.grad.copy() for p in params]
    base = float(loss.data)
    rng = Rng(seed)
    report = GradcheckReport(eps=eps, tol=tol)

    def f() -> float:
        return float(loss_fn().data)

    for i, (p, ga) in enumerate(zip(params, analytic)):
        flat = p.data.reshape(-1)
        if max_entries is None or flat.size <= max_entries:
            entries = np.arange(flat.size)
        else:
            entries = np.sort(rng.child(i).choice(flat.size, max_entries, replace=False))
        worst, kinks = 0.0, 0
        for k in entries:
            orig = flat[k]
            a = ga.reshape(-1)[k]
            h = eps
            for attempt in range(3):
                flat[k] = orig + h
                fp = f()
                flat[k] = orig - h
                fm = f()
                flat[k] = orig
                err = float(rel_error(a, (fp - fm) / (2 * h), floor))
                right, left = (fp - base) / h, (base - fm) / h
                kink = abs(right - left) > 1e-3 * max(abs(right), abs(left), floor)
                if err <= tol or not kink:
                    break
                kinks += 1
                h /= 10
            worst = max(worst, err)
        name = getattr(p, "name", "") or f"tensor[{i}]"
        report.params.append(ParamReport(name, len(entries), worst, kinks))
    return report


def check_op(fn: Callable[..., Tensor], *arrays: np.ndarray, eps: float = 1e-5, tol: float = 1e-4,
             seed: int = 0) -> GradcheckReport:
    """Gradcheck ``fn`` w.r.t. each of its array inputs, reduced by a fixed random projection."""
    leaves = [Parameter(np.array(a, dtype=np.float64), name=f"arg{i}") for i, a in enumerate(arrays)]
    probe = {}

    def loss():
        out = fn(*leaves)
        if "w" not in probe:
            probe["w"] = Tensor(Rng(seed).child("probe").normal(out.shape))
        return (out * probe["w"]).sum()

    return gradcheck(loss, leaves, eps=eps, tol=tol, seed=seed)


def perturb_for_check(model, seed: int = 0) -> None:
    """Move a freshly built model off its degenerate initial point.

    At initialization the topology gate is zero and the graph-conv output
    scale is tiny, which makes several gradients vanish identically; a check
    there proves little. Scales, shifts and gates get random generic values.
    """
    rng = Rng(seed).child("perturb")
    for name, p in model.named_parameters():
        leaf = name.rsplit(".", 1)[-1]
        r = rng.child(name)
        if leaf == "gamma":
            p.data[...] = r.uniform(0.5, 1.5, p.shape)
        elif leaf in ("beta", "lam") or (leaf == "bias" and p.data.size):
            p.data[...] = r.uniform(-0.5, 0.5, p.shape)


def check_model(cfg, *, eps: float = 1e-5, tol: float = 1e-4, max_entries: int | None = 6,
                seed: int = 0, floor: float = 1e-5) -> GradcheckReport:
    """Gradcheck a whole architecture on a micro batch (f64, training mode).

    The absolute floor is higher than for single ops: a bias feeding a
    training-mode batch norm has an exactly zero gradient, and the central
    difference of a deep loss carries ~1e-10 of roundoff there.
    """
    from .models import build_model, micro_batch
    from . import tensor as T

    cfg = cfg.replace(dtype="float64")
    model = build_model(cfg)
    perturb_for_check(model, seed)
    batch = micro_batch(cfg, seed=seed)
    names = [name for name, _ in model.named_parameters()]
    params = model.parameters()

    def loss():
        out = model(batch)
        total = T.cross_entropy(out.logits, batch.labels)
        return total if out.aux_loss is None else total + out.aux_loss

    report = gradcheck(loss, params, eps=eps, tol=tol, max_entries=max_entries, seed=seed, floor=floor)
    for pr, name in zip(report.params, names):
        pr.name = name
    return report


ARCHITECTURES = {
    "pan-guided": {},
    "pan-even": {"sampling": "even"},
    "no-calibration": {"no_calibration": True},
    "no-gc": {"no_gc": True},
    "no-tc": {"no_tc": True},
    "no-pan": {"no_pan": True},
    "skeleton": {"variant": "skeleton"},
    "ensemble": {"variant": "ensemble"},
    "unified-concat": {"variant": "unified", "fusion": "concat"},
    "unified-attention": {"variant": "unified", "fusion": "attention"},
    "unified-sum": {"variant": "unified", "fusion": "sum"},
    "align-pre": {"alignment": "pre"},
    "align-post": {"alignment": "post"},
}


def ablation_cross_product() -> dict[str, dict]:
    """Every base architecture crossed with every ablation flag (where the pair is valid)."""
    bases = {"pan-guided": {}, "pan-even": {"sampling": "even"}, "ensemble": {"variant": "ensemble"},
             **{f"unified-{f}": {"variant": "unified", "fusion": f} for f in ("concat", "attention", "sum")}}
    flags = {"": {}, "+no-calibration": {"no_calibration": True}, "+no-gc": {"no_gc": True},
             "+no-tc": {"no_tc": True}, "+no-pan": {"no_pan": True}}
    return {b + f: {**bv, **fv} for b, bv in bases.items() for f, fv in flags.items()
            if not (bv.get("variant") == "unified" and fv.get("no_pan"))}


# name -> (function of tensors, input shapes); inputs are standard normal draws.
OP_CASES = {
    "add": (lambda a, b: a + b, [(3, 4), (4,)]),
    "sub": (lambda a, b: a - b, [(3, 4), (3, 1)]),
    "mul": (lambda a, b: a * b, [(2, 3), (2, 3)]),
    "div": (lambda a, b: a / (b * b + 1.0), [(2, 3), (3,)]),
    "scale": (lambda a: a * 2.5, [(4,)]),
    "matmul": (T.matmul, [(2, 3, 4), (4, 5)]),
    "concat": (lambda a, b: T.concat([a, b], axis=1), [(2, 3), (2, 2)]),
    "split": (lambda a: T.split(a, [1, 3], axis=1)[1] * 2.0 + T.split(a, [1, 3], axis=1)[0], [(2, 4)]),
    "permute": (lambda a: T.permute(a, (2, 0, 1)), [(2, 3, 4)]),
    "reshape": (lambda a: T.reshape(a, (6, 2)), [(3, 4)]),
    "index": (lambda a: a[:, 1:3], [(3, 4)]),
    "mean": (lambda a: T.mean(a, axis=(0, 2)), [(2, 3, 4)]),
    "sum": (lambda a: T.sum(a, axis=1, keepdims=True), [(2, 3)]),
    "max": (lambda a: T.max(a, axis=1), [(3, 5)]),
    "relu": (T.relu, [(4, 5)]),
    "tanh": (T.tanh, [(4, 5)]),
    "sigmoid": (T.sigmoid, [(4, 5)]),
    "exp": (T.exp, [(4,)]),
    "softmax": (lambda a: T.softmax(a, axis=-1), [(3, 5)]),
    "log_softmax": (lambda a: T.log_softmax(a, axis=0), [(3, 5)]),
    "linear": (T.linear, [(2, 3, 4), (4, 6), (6,)]),
    "conv_temporal": (lambda x, w, b: T.conv_temporal(x, w, b, kernel=5, dilation=2, stride=2),
                      [(2, 9, 3, 4), (20, 3), (3,)]),
    "conv_temporal_circular": (lambda x, w: T.conv_temporal(x, w, kernel=3, pad_mode="circular"),
                               [(1, 6, 2, 2), (6, 4)]),
    "max_pool_temporal": (lambda x: T.max_pool_temporal(x, kernel=3, stride=2), [(2, 7, 3, 2)]),
    "max_pool_circular": (lambda x: T.max_pool_temporal(x, kernel=3, pad_mode="circular"), [(1, 5, 2, 2)]),
    "batch_norm_train": (lambda x, g, b: T.batch_norm(x, g, b, np.zeros(3), np.ones(3), training=True),
                         [(4, 5, 3), (3,), (3,)]),
    "batch_norm_eval": (lambda x, g, b: T.batch_norm(x, g, b, np.full(3, 0.2), np.full(3, 1.5), training=False),
                        [(4, 5, 3), (3,), (3,)]),
    "gather_tokens": (lambda g: T.gather_tokens(g, np.array([[[0, 3, 3], [1, 1, 2]]])), [(1, 2, 4, 3)]),
    "mse": (lambda a, b: T.mse(a, b), [(3, 4), (3, 4)]),
}
OP_CASES["cross_entropy"] = (lambda z: T.cross_entropy(z, np.array([0, 2, 1, 2])), [(4, 3)])


def check_op_case(name: str, eps: float = 1e-5, tol: float = 1e-4) -> GradcheckReport:
    fn, shapes = OP_CASES[name]
    return check_op(fn, *[Rng(i).normal(s) for i, s in enumerate(shapes)], eps=eps, tol=tol)
