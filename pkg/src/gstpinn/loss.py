"""Weighted composite loss: residual, boundary, initial, gradient-residual,
pseudo-point and labeled-data terms, each a mean of squares over its own set.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import jax
import jax.numpy as jnp
import numpy as np

from . import diffnet
from .problems import PdeProblem, bc_residuals, clamp_count, grad_residuals, ic_value, residual
from .sampling import CollocationSets
from .selftrain import PseudoState

MODES = ("pinn", "gpinn", "stpinn", "gstpinn")

# evaluation and summation order of the terms
TERM_ORDER = ("residual", "boundary", "initial", "grad_t", "grad_x", "pseudo", "labeled")


class LossError(ValueError):
    def __init__(self, message, term=None, point=None):
        super().__init__(message)
        self.term = term
        self.point = point


def uses_gradient(mode: str) -> bool:
    return mode in ("gpinn", "gstpinn")


def uses_pseudo(mode: str) -> bool:
    return mode in ("stpinn", "gstpinn")


@dataclass(frozen=True)
class LossWeights:
    w_G: float = 1.0
    w_D: float = 1.0
    w_S: float = 1.0
    w_g: tuple[float, float] = (0.01, 0.01)  # coordinate order (t, x)
    w_p: float = 1.0
    w_d: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "w_g", tuple(float(w) for w in self.w_g))
        for name, w in self.as_dict().items():
            if not np.isfinite(w) or w < 0:
                raise LossError(f"weight {name}={w} must be finite and >= 0")

    @property
    def w_I(self) -> float:
        return self.w_S

    def as_dict(self) -> dict[str, float]:
        return {
            "residual": self.w_G,
            "boundary": self.w_D,
            "initial": self.w_S,
            "grad_t": self.w_g[0],
            "grad_x": self.w_g[1],
            "pseudo": self.w_p,
            "labeled": self.w_d,
        }


@dataclass
class LossBreakdown:
    total: float
    terms: dict[str, tuple[float, float]]
    counts: dict[str, int]
    clamped: int = 0

    def csv_row(self) -> dict:
        row = {"total": self.total}
        for name in TERM_ORDER:
            mse, weighted = self.terms.get(name, (0.0, 0.0))
            row[f"{name}_mse"] = mse
            row[f"{name}_weighted"] = weighted
        return row


def active_terms(sets: CollocationSets, weights: LossWeights, mode: str, pseudo_count: int) -> tuple[str, ...]:
    """Terms that contribute: allowed by the mode, positive weight, non-empty set.

    Inactive terms are not evaluated at all, so e.g. gstpinn with zero gradient
    weights and no pseudo points compiles to the same computation as pinn.
    """
    if mode not in MODES:
        raise LossError(f"unknown mode {mode!r}")
    w = weights.as_dict()
    sizes = {
        "residual": len(sets.domain),
        "boundary": len(sets.boundary_left),
        "initial": len(sets.initial),
        "grad_t": len(sets.gradient_sets[0]) if uses_gradient(mode) else 0,
        "grad_x": len(sets.gradient_sets[1]) if uses_gradient(mode) else 0,
        "pseudo": pseudo_count if uses_pseudo(mode) else 0,
        "labeled": len(sets.labeled),
    }
    return tuple(t for t in TERM_ORDER if w[t] > 0 and sizes[t] > 0)


def loss_data(problem: PdeProblem, sets: CollocationSets, pseudo: PseudoState | None = None) -> dict:
    """Arrays consumed by the loss; pseudo mask/labels are indexed like the domain set."""
    n = len(sets.domain)
    if pseudo is not None and pseudo.count:
        mask, labels = pseudo.dense()
    else:
        mask, labels = np.zeros(n), np.zeros(n)
    data = {
        "domain": sets.domain,
        "left": sets.boundary_left,
        "right": sets.boundary_right,
        "initial": sets.initial,
        "initial_target": ic_value(problem, sets.initial[:, 1]) if len(sets.initial) else np.zeros(0),
        "labeled_points": sets.labeled[:, :2],
        "labeled_values": sets.labeled[:, 2],
        "pseudo_mask": mask,
        "pseudo_labels": labels,
    }
    if sets.gradient is not None:
        data["gradient"] = sets.gradient
    return {k: jnp.asarray(np.asarray(v, dtype=np.float64)) for k, v in data.items()}


def squared_residuals(params: diffnet.NetworkParams, problem: PdeProblem, data: dict,
                      terms: Iterable[str]) -> dict:
    """Per-point squared residuals for each requested term (traceable)."""
    terms = tuple(terms)
    out = {}
    grad_terms = [t for t in terms if t in ("grad_t", "grad_x")]
    aliased = "gradient" not in data
    orders = set(problem.residual_orders)
    if grad_terms and aliased:
        orders |= problem.gradient_orders
    needs_domain = {"residual", "pseudo"} & set(terms) or (grad_terms and aliased)
    if needs_domain:
        jet = diffnet.jet_batch(params, data["domain"], orders)
        if "residual" in terms:
            out["residual"] = residual(problem, jet) ** 2
        if "pseudo" in terms:
            out["pseudo"] = data["pseudo_mask"] * (jet[(0, 0)] - data["pseudo_labels"]) ** 2
    if grad_terms:
        gjet = jet if aliased else diffnet.jet_batch(params, data["gradient"], problem.gradient_orders)
        g = grad_residuals(problem, gjet)
        if "grad_t" in terms:
            out["grad_t"] = g[0] ** 2
        if "grad_x" in terms:
            out["grad_x"] = g[1] ** 2
    if "boundary" in terms:
        left = diffnet.jet_batch(params, data["left"], problem.boundary_orders)
        right = diffnet.jet_batch(params, data["right"], problem.boundary_orders)
        res = bc_residuals(problem, (left, right))
        sq = res[0] ** 2
        for r in res[1:]:
            sq = sq + r ** 2
        out["boundary"] = sq
    if "initial" in terms:
        u0 = diffnet.forward_batch(params, data["initial"])
        out["initial"] = (u0 - data["initial_target"]) ** 2
    if "labeled" in terms:
        ud = diffnet.forward_batch(params, data["labeled_points"])
        out["labeled"] = (ud - data["labeled_values"]) ** 2
    return {t: out[t] for t in terms}


def _term_means(sq: dict, data: dict) -> dict:
    means = {}
    for t, v in sq.items():
        if t == "pseudo":
            means[t] = jnp.sum(v) / jnp.sum(data["pseudo_mask"])
        else:
            means[t] = jnp.mean(v)
    return means


class LossFunction:
    """Compiled loss for a fixed problem, architecture, weights and term set."""

    def __init__(self, problem: PdeProblem, layer_sizes, weights: LossWeights, terms: tuple[str, ...]):
        self.problem = problem
        self.layer_sizes = tuple(layer_sizes)
        self.weights = weights
        self.terms = tuple(terms)
        w = weights.as_dict()

        def terms_fn(flat, data):
            params = diffnet.NetworkParams.from_flat(self.layer_sizes, flat)
            return _term_means(squared_residuals(params, problem, data, self.terms), data)

        def total_fn(flat, data):
            means = terms_fn(flat, data)
            total = jnp.asarray(0.0)
            for t in self.terms:
                total = total + w[t] * means[t]
            return total, means

        self._terms = jax.jit(terms_fn)
        self._value_and_grad = jax.jit(jax.value_and_grad(total_fn, has_aux=True))

        def sq_fn(flat, data):
            params = diffnet.NetworkParams.from_flat(self.layer_sizes, flat)
            return squared_residuals(params, problem, data, self.terms)

        self._sq = jax.jit(sq_fn)

    def term_means(self, flat, data) -> dict:
        return self._terms(flat, data)

    def value_and_grad(self, flat, data):
        """(total, term means, flat gradient)."""
        (total, means), grad = self._value_and_grad(flat, data)
        return total, means, grad

    def breakdown(self, flat, data, points: dict | None = None) -> LossBreakdown:
        means = {t: float(v) for t, v in self.term_means(flat, data).items()}
        w = self.weights.as_dict()
        bad = [t for t in self.terms if not np.isfinite(means[t])]
        if bad:
            t = bad[0]
            sq = np.asarray(self._sq(flat, data)[t])
            first = int(np.flatnonzero(~np.isfinite(sq))[0])
            where = None if points is None or t not in points else points[t][first]
            raise LossError(f"loss term {t!r} is not finite at point index {first} ({where})",
                            term=t, point=first)
        terms = {}
        total = 0.0
        for t in self.terms:
            contribution = w[t] * means[t]
            terms[t] = (means[t], contribution)
            total += contribution
        counts = _counts(data, self.terms)
        return LossBreakdown(total, terms, counts)


def _counts(data: dict, terms) -> dict[str, int]:
    sizes = {
        "residual": data["domain"].shape[0],
        "boundary": data["left"].shape[0],
        "initial": data["initial"].shape[0],
        "grad_t": data.get("gradient", data["domain"]).shape[0],
        "grad_x": data.get("gradient", data["domain"]).shape[0],
        "pseudo": int(np.sum(np.asarray(data["pseudo_mask"]))),
        "labeled": data["labeled_points"].shape[0],
    }
    return {t: int(sizes[t]) for t in terms}


def _term_points(data: dict) -> dict:
    dom = np.asarray(data["domain"])
    grad = np.asarray(data.get("gradient", data["domain"]))
    return {
        "residual": dom,
        "pseudo": dom,
        "grad_t": grad,
        "grad_x": grad,
        "boundary": np.asarray(data["left"]),
        "initial": np.asarray(data["initial"]),
        "labeled": np.asarray(data["labeled_points"]),
    }


def total_loss(params: diffnet.NetworkParams, problem: PdeProblem, sets: CollocationSets,
               pseudo: PseudoState | None, weights: LossWeights, mode: str) -> LossBreakdown:
    """Evaluate the composite loss once, with per-term breakdown."""
    count = pseudo.count if pseudo is not None else 0
    terms = active_terms(sets, weights, mode, count)
    data = loss_data(problem, sets, pseudo)
    fn = LossFunction(problem, params.layer_sizes, weights, terms)
    out = fn.breakdown(params.flat(), data, _term_points(data))
    if problem.kind == "sorption" and len(sets.domain):
        out.clamped = clamp_count(problem, diffnet.forward_batch(params, jnp.asarray(sets.domain)))
    return out
