"""
Central finite-difference checks for every differentiable op.

Each case builds random inputs from a seeded generator and reduces the op's
output to a scalar through a fixed random weighting, so every output element
contributes to the checked gradient. The relative error of a case is

    ||analytic - numeric|| / max(||analytic||, ||numeric||, 1e-12)

over all inputs together, maximised over seeds.
"""

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import losses, ops
from .tensor import Tensor, no_grad, parameter

logger = logging.getLogger(__name__)

DEFAULT_TOLERANCE = 1e-4
BATCHNORM_TOLERANCE = 1e-3
FD_STEP = 1e-6

# A case returns its differentiable inputs and a closure mapping them to a scalar
CaseBuilder = Callable[[np.random.Generator], tuple[list[Tensor], Callable[[list[Tensor]], Tensor]]]


@dataclass
class GradcheckResult:
    op: str
    max_rel_error: float
    tolerance: float
    seeds: int
    passed: bool


def _weighted(out: Tensor, rng: np.random.Generator) -> Callable[[Tensor], Tensor]:
    weights = rng.normal(size=out.shape)
    return lambda t: (t * weights).sum()


def _away_from_zero(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    u = rng.normal(size=shape)
    return np.sign(u) * (0.1 + np.abs(u))


def _distinct(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    n = int(np.prod(shape))
    return (rng.permutation(n).astype(np.float64) * 0.1 - 0.05 * n).reshape(shape)


def _unary_case(op: Callable[[Tensor], Tensor], make_input) -> CaseBuilder:
    def build(rng):
        x = parameter(make_input(rng))
        traced = op(Tensor(x.data))
        reduce = _weighted(traced, rng)
        return [x], lambda ins: reduce(op(ins[0]))
    return build


def _conv_case(stride: int, padding: int) -> CaseBuilder:
    def build(rng):
        x = parameter(rng.normal(size=(2, 2, 5, 5)))
        w = parameter(rng.normal(size=(3, 2, 3, 3)))
        b = parameter(rng.normal(size=3))
        traced = ops.conv2d(Tensor(x.data), Tensor(w.data), Tensor(b.data), stride, padding)
        reduce = _weighted(traced, rng)
        return [x, w, b], lambda ins: reduce(ops.conv2d(ins[0], ins[1], ins[2], stride, padding))
    return build


def _batchnorm_case(training: bool) -> CaseBuilder:
    def build(rng):
        c = 3
        x = parameter(rng.normal(size=(4, c, 3, 3)))
        gamma = parameter(rng.uniform(0.5, 1.5, size=c))
        beta = parameter(rng.normal(size=c))
        running_mean = rng.normal(size=c)
        running_var = rng.uniform(0.5, 2.0, size=c)

        def forward(ins):
            # fresh copies so repeated forwards see identical running stats
            return ops.batchnorm2d(ins[0], ins[1], ins[2], running_mean.copy(), running_var.copy(), training)

        reduce = _weighted(forward([Tensor(x.data), Tensor(gamma.data), Tensor(beta.data)]), rng)
        return [x, gamma, beta], lambda ins: reduce(forward(ins))
    return build


def _concat_case(rng):
    a = parameter(rng.normal(size=(2, 1, 3, 3)))
    b = parameter(rng.normal(size=(2, 3, 3, 3)))
    traced = ops.concat([Tensor(a.data), Tensor(b.data)], axis=1)
    reduce = _weighted(traced, rng)
    return [a, b], lambda ins: reduce(ops.concat(ins, axis=1))


def _linear_case(rng):
    x = parameter(rng.normal(size=(3, 4)))
    w = parameter(rng.normal(size=(5, 4)))
    b = parameter(rng.normal(size=5))
    reduce = _weighted(ops.linear(Tensor(x.data), Tensor(w.data), Tensor(b.data)), rng)
    return [x, w, b], lambda ins: reduce(ops.linear(ins[0], ins[1], ins[2]))


def _arith_case(rng):
    a = parameter(rng.normal(size=(2, 3)))
    b = parameter(rng.normal(size=(2, 3)))
    c = parameter(rng.normal(size=(1, 3)))
    return [a, b, c], lambda ins: ((ins[0] * ins[1] + ins[2]) * 0.5 - ins[1]).mean()


def _dice_case(rng):
    logits = parameter(rng.normal(size=(2, 1, 4, 4)))
    target = (rng.uniform(size=(2, 1, 4, 4)) > 0.5).astype(np.float64)
    return [logits], lambda ins: losses.dice_loss(ins[0], target)


def _mse_case(rng):
    pred = parameter(rng.normal(size=(2, 1, 4, 4)))
    target = rng.normal(size=(2, 1, 4, 4))
    return [pred], lambda ins: losses.mse_loss(ins[0], target)


def _cross_entropy_case(rng):
    logits = parameter(rng.normal(size=(4, 3)))
    labels = rng.integers(0, 3, size=4)
    return [logits], lambda ins: losses.cross_entropy(ins[0], labels)


def _segmentation_objective_case(rng):
    """Weighted Dice + boundary MSE + SDM MSE, weights (3, 1, 1)."""
    shape = (2, 1, 4, 4)
    p_s = parameter(rng.normal(size=shape))
    p_b = parameter(rng.normal(size=shape))
    p_d = parameter(rng.normal(size=shape))
    mask = (rng.uniform(size=shape) > 0.5).astype(np.float64)
    g_bd = rng.uniform(size=shape)
    g_sd = rng.uniform(-1.0, 1.0, size=shape)

    def forward(ins):
        return (
            losses.dice_loss(ins[0], mask) * 3.0
            + losses.mse_loss(ins[1], g_bd) * 1.0
            + losses.mse_loss(ins[2], g_sd) * 1.0
        )

    return [p_s, p_b, p_d], forward


CASES: dict[str, tuple[CaseBuilder, float]] = {
    "conv2d": (_conv_case(stride=1, padding=1), DEFAULT_TOLERANCE),
    "conv2d_stride2": (_conv_case(stride=2, padding=0), DEFAULT_TOLERANCE),
    "batchnorm2d_train": (_batchnorm_case(training=True), BATCHNORM_TOLERANCE),
    "batchnorm2d_eval": (_batchnorm_case(training=False), BATCHNORM_TOLERANCE),
    "relu": (_unary_case(ops.relu, lambda rng: _away_from_zero(rng, (2, 2, 3, 3))), DEFAULT_TOLERANCE),
    "sigmoid": (_unary_case(ops.sigmoid, lambda rng: rng.normal(size=(2, 2, 3, 3))), DEFAULT_TOLERANCE),
    "softmax": (_unary_case(ops.softmax, lambda rng: rng.normal(size=(3, 4))), DEFAULT_TOLERANCE),
    "upsample_nearest2x": (
        _unary_case(ops.upsample_nearest2x, lambda rng: rng.normal(size=(2, 2, 2, 3))),
        DEFAULT_TOLERANCE,
    ),
    "maxpool2x": (_unary_case(ops.maxpool2x, lambda rng: _distinct(rng, (2, 2, 4, 4))), DEFAULT_TOLERANCE),
    "concat": (_concat_case, 1e-6),
    "global_avg_pool": (
        _unary_case(ops.global_avg_pool, lambda rng: rng.normal(size=(2, 3, 3, 3))),
        DEFAULT_TOLERANCE,
    ),
    "linear": (_linear_case, DEFAULT_TOLERANCE),
    "arithmetic": (_arith_case, DEFAULT_TOLERANCE),
    "dice_loss": (_dice_case, DEFAULT_TOLERANCE),
    "mse_loss": (_mse_case, DEFAULT_TOLERANCE),
    "cross_entropy": (_cross_entropy_case, DEFAULT_TOLERANCE),
    "segmentation_objective": (_segmentation_objective_case, DEFAULT_TOLERANCE),
}


def numeric_gradients(inputs: list[Tensor], forward: Callable[[list[Tensor]], Tensor], step: float = FD_STEP) -> list[np.ndarray]:
    grads = []
    with no_grad():
        for x in inputs:
            grad = np.zeros_like(x.data)
            flat = x.data.reshape(-1)
            for i in range(flat.size):
                original = flat[i]
                flat[i] = original + step
                plus = forward(inputs).item()
                flat[i] = original - step
                minus = forward(inputs).item()
                flat[i] = original
                grad.reshape(-1)[i] = (plus - minus) / (2.0 * step)
            grads.append(grad)
    return grads


def analytic_gradients(inputs: list[Tensor], forward: Callable[[list[Tensor]], Tensor]) -> list[np.ndarray]:
    for x in inputs:
        x.zero_grad()
    forward(inputs).backward()
    return [x.grad if x.grad is not None else np.zeros_like(x.data) for x in inputs]


def relative_error(analytic: list[np.ndarray], numeric: list[np.ndarray]) -> float:
    a = np.concatenate([g.reshape(-1) for g in analytic])
    n = np.concatenate([g.reshape(-1) for g in numeric])
    scale = max(np.linalg.norm(a), np.linalg.norm(n), 1e-12)
    return float(np.linalg.norm(a - n) / scale)


def check_case(name: str, seed: int = 0, n_seeds: int = 10, corrupt: bool = False) -> GradcheckResult:
    """Run one case over `n_seeds` seeds.

    `corrupt` scales the analytic gradient by 1.5; it exists to prove the
    harness fails loudly on a broken backward.
    """
    build, tolerance = CASES[name]
    worst = 0.0
    for offset in range(n_seeds):
        rng = np.random.default_rng([seed, offset])
        inputs, forward = build(rng)
        analytic = analytic_gradients(inputs, forward)
        if corrupt:
            analytic = [g * 1.5 for g in analytic]
        numeric = numeric_gradients(inputs, forward)
        worst = max(worst, relative_error(analytic, numeric))
    passed = worst < tolerance
    log = logger.info if passed else logger.error
    log(f"gradcheck {name}: max rel err {worst:.3e} (tol {tolerance:.0e}) {'PASS' if passed else 'FAIL'}")
    return GradcheckResult(op=name, max_rel_error=worst, tolerance=tolerance, seeds=n_seeds, passed=passed)


def run_suite(seed: int = 0, n_seeds: int = 10, corrupt: str | None = None) -> list[GradcheckResult]:
    return [check_case(name, seed, n_seeds, corrupt=(name == corrupt)) for name in CASES]
