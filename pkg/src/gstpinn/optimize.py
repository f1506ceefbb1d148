"""Adam and the training loop.

Each iteration evaluates the full-batch loss and its parameter gradient and
takes one Adam step.  In the self-training modes a pseudo-point round runs
every ``p`` iterations (never at iteration 0, when the network is untrained).
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import diffnet
from .loss import TERM_ORDER, LossBreakdown, LossFunction, _counts, active_terms, loss_data, uses_gradient, uses_pseudo
from .metrics import evaluate
from .sampling import sample_sets
from .selftrain import PseudoState, generate_pseudo

DIVERGENCE_LIMIT = 1e12


class OptimizeError(ValueError):
    pass


class TrainingDiverged(RuntimeError):
    """Raised with everything logged up to the failing iteration."""

    def __init__(self, message, iteration, history, params):
        super().__init__(message)
        self.iteration = iteration
        self.history = history
        self.params = params


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, n: int, lr: float = 1e-3) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n), 0, lr)


def adam_update(state: AdamState, flat: np.ndarray, grad: np.ndarray):
    """One bias-corrected Adam step on flat float64 vectors; returns (state, flat)."""
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != state.m.shape:
        raise OptimizeError(f"gradient has {grad.size} entries, optimizer state {state.m.size}")
    bad = np.flatnonzero(~np.isfinite(grad))
    if bad.size:
        raise OptimizeError(f"non-finite gradient component at index {int(bad[0])}")
    step = state.step + 1
    m = state.beta1 * state.m + (1 - state.beta1) * grad
    v = state.beta2 * state.v + (1 - state.beta2) * grad * grad
    m_hat = m / (1 - state.beta1**step)
    v_hat = v / (1 - state.beta2**step)
    new_flat = np.asarray(flat, dtype=np.float64) - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return AdamState(m, v, step, state.lr, state.beta1, state.beta2, state.eps), new_flat


def adam_step(state: AdamState, params: diffnet.NetworkParams, grad):
    state, flat = adam_update(state, params.to_numpy(), grad)
    return state, diffnet.NetworkParams.from_flat(params.layer_sizes, flat)


@dataclass
class HistoryRecord:
    iteration: int
    loss: LossBreakdown
    mse: float | None
    rel_l2: float | None
    pseudo_count: int
    wall_time: float

    def row(self) -> dict:
        row = {"iteration": self.iteration, **self.loss.csv_row()}
        row["mse"] = "" if self.mse is None else self.mse
        row["rel_l2"] = "" if self.rel_l2 is None else self.rel_l2
        row["pseudo_count"] = self.pseudo_count
        row["wall_time"] = self.wall_time
        return row


@dataclass
class TrainHistory:
    records: list[HistoryRecord] = field(default_factory=list)
    pseudo_log: list[dict] = field(default_factory=list)

    def append(self, rec: HistoryRecord) -> None:
        if self.records and rec.iteration <= self.records[-1].iteration:
            raise OptimizeError("history iterations must be strictly increasing")
        self.records.append(rec)

    def __len__(self):
        return len(self.records)

    @property
    def iterations(self) -> list[int]:
        return [r.iteration for r in self.records]

    @property
    def totals(self) -> list[float]:
        return [r.loss.total for r in self.records]

    @property
    def mse(self) -> list:
        return [r.mse for r in self.records]

    def numeric_rows(self) -> list[dict]:
        """Rows without wall time, for exact run-to-run comparison."""
        rows = []
        for r in self.records:
            row = r.row()
            row.pop("wall_time")
            rows.append(row)
        return rows

    def write_csv(self, path, **meta) -> None:
        header = ["iteration", "total"]
        for t in TERM_ORDER:
            header += [f"{t}_mse", f"{t}_weighted"]
        header += ["mse", "rel_l2", "pseudo_count", "wall_time"]
        _write_rows(path, header, [r.row() for r in self.records], meta)

    def write_pseudo_log(self, path, **meta) -> None:
        header = ["iteration", "candidates", "selected", "pseudo_count", "excluded"]
        _write_rows(path, header, self.pseudo_log, meta)


def _write_rows(path, header, rows, meta) -> None:
    with open(path, "w", newline="") as fh:
        for k, v in meta.items():
            fh.write(f"# {k}={v}\n")
        w = csv.DictWriter(fh, fieldnames=header)
        w.writeheader()
        for row in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


def _breakdown(fn: LossFunction, total, means, data) -> LossBreakdown:
    w = fn.weights.as_dict()
    terms = {t: (float(means[t]), w[t] * float(means[t])) for t in fn.terms}
    return LossBreakdown(float(total), terms, _counts(data, fn.terms))


@lru_cache(maxsize=32)
def _loss_function(problem, layer_sizes, weights, terms) -> LossFunction:
    # compiled functions are reused across runs with the same structure
    return LossFunction(problem, layer_sizes, weights, terms)


def train(config, reference=None, out_dir=None, sets=None, progress=None):
    """Run the configured experiment; returns (params, history, pseudo_state).

    ``reference`` supplies labeled points and logged errors; it is required
    when the config asks for labeled points.  ``sets`` overrides sampling.
    Checkpoints go to ``out_dir`` when given.
    """
    problem = config.problem()
    mode = config.mode
    weights = config.weights()
    opt = config["optimizer"]
    st = config["selftrain"]
    seed = config.seed

    if sets is None:
        if config["sampling"]["n_labeled"] > 0 and reference is None:
            raise OptimizeError("labeled points requested but no reference solution given")
        sets = sample_sets(problem, config.counts(), seed, reference)

    layer_sizes = config.layer_sizes
    params = diffnet.init_params(layer_sizes, seed)
    flat = params.to_numpy()
    adam = AdamState.zeros(flat.size, opt["lr"])
    n_rows = 2 if uses_gradient(mode) else 1
    pseudo = PseudoState.empty(len(sets.domain), n_rows, st["q"], st["r"], config.p)
    history = TrainHistory()
    iterations = opt["iterations"]
    if iterations == 0:
        return params, history, pseudo

    out_dir = Path(out_dir) if out_dir is not None else None
    ckpt_every = opt["checkpoint_every"]
    p = config.p
    data = loss_data(problem, sets, pseudo)
    t0 = time.perf_counter()

    def loss_fn():
        terms = active_terms(sets, weights, mode, pseudo.count)
        return _loss_function(problem, layer_sizes, weights, terms)

    def log(k, fn, total, means, cur):
        mse = rel = None
        if reference is not None:
            rep = evaluate(diffnet.NetworkParams.from_flat(layer_sizes, cur), reference, keep_field=False)
            mse, rel = rep.mse, rep.rel_l2
        rec = HistoryRecord(k, _breakdown(fn, total, means, data), mse, rel, pseudo.count,
                            time.perf_counter() - t0)
        history.append(rec)
        if progress is not None:
            progress(rec)

    def diverged(k, total):
        return not math.isfinite(total) or total > DIVERGENCE_LIMIT

    fn = loss_fn()
    for k in range(iterations):
        if uses_pseudo(mode) and k > 0 and not math.isinf(p) and k % p == 0:
            cur = diffnet.NetworkParams.from_flat(layer_sizes, flat)
            pseudo, report = generate_pseudo(pseudo, cur, problem, sets.domain,
                                             gradient_filter=uses_gradient(mode), iteration=k)
            history.pseudo_log.append(report.csv_row())
            data = loss_data(problem, sets, pseudo)
            fn = loss_fn()
        total, means, grad = fn.value_and_grad(flat, data)
        total = float(total)
        if k % opt["log_every"] == 0:
            log(k, fn, total, means, flat)
        if diverged(k, total):
            raise TrainingDiverged(f"loss diverged at iteration {k} (total={total:g})", k, history,
                                   diffnet.NetworkParams.from_flat(layer_sizes, flat))
        try:
            adam, flat = adam_update(adam, flat, np.asarray(grad))
        except OptimizeError as exc:
            raise TrainingDiverged(f"iteration {k}: {exc}", k, history,
                                   diffnet.NetworkParams.from_flat(layer_sizes, flat)) from None
        if out_dir is not None and ckpt_every and (k + 1) % ckpt_every == 0 and k + 1 < iterations:
            diffnet.save_checkpoint(out_dir / f"checkpoint_{k + 1:06d}.bin",
                                    diffnet.NetworkParams.from_flat(layer_sizes, flat),
                                    iteration=k + 1, config_hash=config.hash, seed=seed)

    # state after the last update
    total, means, _ = fn.value_and_grad(flat, data)
    total = float(total)
    log(iterations, fn, total, means, flat)
    final = diffnet.NetworkParams.from_flat(layer_sizes, flat)
    if diverged(iterations, total):
        raise TrainingDiverged(f"loss diverged after the final step (total={total:g})", iterations, history, final)
    return final, history, pseudo
