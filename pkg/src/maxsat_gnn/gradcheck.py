"""Central finite-difference gradient oracle (float64)."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import engine as E
from .cnf import CnfFormula
from .engine import ParamStore, Tape
from .graphs import build_graph
from .model import ModelConfig, forward, init_model

LossFn = Callable[[Tape, dict], E.Var]


@dataclass
class GradCheckResult:
    rel_errors: dict[str, float]
    kinks: int  # perturbations that changed some ReLU's active set

    @property
    def worst(self) -> float:
        return max(self.rel_errors.values())

    def ok(self, tol: float) -> bool:
        return self.kinks == 0 and self.worst < tol


def _run(loss_fn: LossFn, params: ParamStore):
    tape = Tape(record_relu=True)
    loss = loss_fn(tape, tape.bind(params.params))
    return tape, loss


def _pattern(tape: Tape) -> list[np.ndarray]:
    return list(tape.relu_masks)


def check_gradients(loss_fn: LossFn, params: ParamStore, h: float = 1e-3) -> GradCheckResult:
    """Compare ``tape.backward`` with central differences for every entry.

    The relative error of a parameter tensor is ``max|analytic - numeric|``
    over ``max(max|numeric|, max|analytic|)``. A difference whose two
    evaluations see a different ReLU activation pattern is not a valid
    oracle there; such entries are counted in ``kinks``.
    """
    params = params.astype(np.float64)
    tape, loss = _run(loss_fn, params)
    base = _pattern(tape)
    analytic = tape.backward(loss)
    errors, kinks = {}, 0
    for name in params.names():
        theta = params[name]
        numeric = np.zeros_like(theta)
        for idx in np.ndindex(theta.shape):
            orig = theta[idx]
            theta[idx] = orig + h
            tp, lp = _run(loss_fn, params)
            theta[idx] = orig - h
            tm, lm = _run(loss_fn, params)
            theta[idx] = orig
            if any(not np.array_equal(a, b) or not np.array_equal(a, c)
                   for a, b, c in zip(base, _pattern(tp), _pattern(tm))):
                kinks += 1
            numeric[idx] = (lp.value[0, 0] - lm.value[0, 0]) / (2 * h)
        scale = max(np.max(np.abs(numeric)), np.max(np.abs(analytic[name])), 1e-12)
        errors[name] = float(np.max(np.abs(numeric - analytic[name])) / scale)
    return GradCheckResult(errors, kinks)


def random_model_params(config: ModelConfig, seed: int) -> ParamStore:
    """Model-shaped float64 parameters with random (nonzero) biases."""
    params = init_model(ModelConfig(config.kind, config.d, config.T, seed), np.float64)
    rng = np.random.default_rng([seed, 1])
    for name in params.names():
        if name.endswith(".b"):
            params[name][...] = rng.uniform(-0.5, 0.5, params[name].shape)
    return params


def model_loss_fn(formula: CnfFormula, config: ModelConfig, labels, init_seed: int = 0) -> LossFn:
    graph = build_graph(formula, config.kind)
    y = np.asarray(labels, dtype=np.float64)

    def loss_fn(tape, p):
        return E.bce(E.sigmoid(forward(graph, p, config, init_seed)), y)

    return loss_fn


def check_model_gradients(formula: CnfFormula, kind: str, d: int = 4, T: int = 2, labels=None,
                          h: float = 1e-3, seeds=range(20)) -> tuple[int, GradCheckResult]:
    """Gradient check of a full model on ``formula``.

    Tries parameter seeds in order and returns the first whose check saw no
    ReLU kink (with its result), or the last one tried.
    """
    labels = labels if labels is not None else [i % 2 for i in range(formula.num_vars)]
    result, seed = None, None
    for seed in seeds:
        config = ModelConfig(kind, d, T, seed)
        result = check_gradients(model_loss_fn(formula, config, labels, seed), random_model_params(config, seed), h)
        if result.kinks == 0:
            break
    return seed, result
