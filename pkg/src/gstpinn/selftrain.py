"""Gradient-enhanced pseudo-point generation.

One round ranks the domain collocation points by |PDE residual| and keeps the
best fraction ``q`` as candidates; for every coordinate it ranks those
candidates by |gradient residual| and keeps the best fraction ``q`` again.
Each coordinate has a flag counter per point: surviving both filters bumps
it, missing the filter resets it.  A point whose counters exceed ``r`` in
every coordinate becomes a pseudo point labeled with the network's current
prediction.  Labels are frozen until the point is re-selected.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import jax
import jax.numpy as jnp
import numpy as np

from . import diffnet
from .problems import PdeProblem, grad_residuals, residual


class SelfTrainError(ValueError):
    pass


def fraction_count(q: float, n: int) -> int:
    """floor(q * n), at least 1; the epsilon guards products like 0.29 * 100."""
    return max(1, int(math.floor(q * n + 1e-9)))


def arg_partition(values, q: float) -> np.ndarray:
    """Indices of the floor(q*len) entries with smallest |value|.

    Ties go to the lower index; the result is ordered by (|value|, index).
    """
    v = np.abs(np.asarray(values, dtype=np.float64))
    if v.ndim != 1 or v.size == 0:
        raise SelfTrainError("arg_partition needs a non-empty 1-D array")
    if not 0 < q <= 1:
        raise SelfTrainError(f"fraction q={q} outside (0, 1]")
    if not np.all(np.isfinite(v)):
        raise SelfTrainError("arg_partition values must be finite")
    k = fraction_count(q, v.size)
    kth = np.partition(v, k - 1)[k - 1]
    below = np.flatnonzero(v < kth)
    at = np.flatnonzero(v == kth)[: k - below.size]
    chosen = np.concatenate([below, at])
    return chosen[np.lexsort((chosen, v[chosen]))]


@dataclass
class PseudoState:
    flags: np.ndarray
    q: float = 0.1
    r: int = 2
    p: int = 500
    pseudo_points: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0 < self.q <= 1:
            raise SelfTrainError(f"candidate rate q={self.q} outside (0, 1]")
        if self.r < 0 or int(self.r) != self.r:
            raise SelfTrainError("selection threshold r must be a non-negative integer")
        if self.p < 1:
            raise SelfTrainError("update frequency p must be >= 1")
        self.flags = np.asarray(self.flags, dtype=np.int64)

    @classmethod
    def empty(cls, n_points: int, n_coords: int = 2, q: float = 0.1, r: int = 2, p: int = 500):
        return cls(np.zeros((n_coords, n_points), dtype=np.int64), q, int(r), p)

    @property
    def n_points(self) -> int:
        return self.flags.shape[1]

    @property
    def count(self) -> int:
        return len(self.pseudo_points)

    def dense(self) -> tuple[np.ndarray, np.ndarray]:
        """(mask, labels) over the domain index range, for loss evaluation."""
        mask = np.zeros(self.n_points)
        labels = np.zeros(self.n_points)
        for j, (_, label) in self.pseudo_points.items():
            mask[j] = 1.0
            labels[j] = label
        return mask, labels

    def copy(self) -> "PseudoState":
        return PseudoState(self.flags.copy(), self.q, self.r, self.p, dict(self.pseudo_points))


@dataclass
class GenerationReport:
    iteration: int
    n_points: int
    n_excluded: int
    n_candidates: int
    n_filtered: list[int]
    selected: np.ndarray
    n_pseudo: int
    flag_histogram: dict[int, int]

    @property
    def n_selected(self) -> int:
        return int(self.selected.size)

    def csv_row(self) -> dict:
        return {
            "iteration": self.iteration,
            "candidates": self.n_candidates,
            "selected": self.n_selected,
            "pseudo_count": self.n_pseudo,
            "excluded": self.n_excluded,
        }


def pseudo_round(state: PseudoState, residuals, grad_residual, values, coords=None, iteration: int = 0):
    """One generation round on precomputed fields; returns (new_state, report).

    ``grad_residual`` is an ``(N, M)`` array (only candidate columns are read),
    a callable mapping candidate indices to an ``(N, len)`` array, or ``None``
    for the single residual filter (self-training without gradient ranking).
    """
    res = np.asarray(residuals, dtype=np.float64)
    vals = np.asarray(values, dtype=np.float64)
    m = state.n_points
    if res.shape != (m,) or vals.shape != (m,):
        raise SelfTrainError(f"expected residuals/values of length {m}")
    new = state.copy()
    finite = np.isfinite(res) & np.isfinite(vals)
    pool = np.flatnonzero(finite)
    n_excluded = m - pool.size
    if pool.size == 0:
        new.flags[:] = 0
        report = GenerationReport(iteration, m, n_excluded, 0, [0] * new.flags.shape[0],
                                  np.empty(0, dtype=np.int64), new.count, {})
        return new, report

    cand = pool[arg_partition(res[pool], state.q)]

    if grad_residual is None:
        filtered = [cand]
    else:
        if callable(grad_residual):
            g = np.asarray(grad_residual(cand), dtype=np.float64)
        else:
            g = np.asarray(grad_residual, dtype=np.float64)[:, cand]
        if g.shape[0] != new.flags.shape[0]:
            raise SelfTrainError(
                f"{g.shape[0]} gradient residual rows for {new.flags.shape[0]} flag counters"
            )
        filtered = []
        for gi in g:
            ok = np.flatnonzero(np.isfinite(gi))
            if ok.size == 0:
                filtered.append(np.empty(0, dtype=np.int64))
                continue
            filtered.append(cand[ok[arg_partition(gi[ok], state.q)]])

    member = np.zeros_like(new.flags, dtype=bool)
    for i, idx in enumerate(filtered):
        member[i, idx] = True
    new.flags[member] += 1
    new.flags[~member] = 0

    qualified = np.all(member & (new.flags > state.r), axis=0)
    selected = np.flatnonzero(qualified)
    for j in selected:
        point = tuple(float(c) for c in coords[j]) if coords is not None else None
        new.pseudo_points[int(j)] = (point, float(vals[j]))

    hist_vals, hist_counts = np.unique(new.flags, return_counts=True)
    report = GenerationReport(
        iteration=iteration,
        n_points=m,
        n_excluded=n_excluded,
        n_candidates=int(cand.size),
        n_filtered=[int(f.size) for f in filtered],
        selected=selected,
        n_pseudo=new.count,
        flag_histogram={int(a): int(b) for a, b in zip(hist_vals, hist_counts)},
    )
    return new, report


@lru_cache(maxsize=None)
def _field_fns(problem: PdeProblem, layer_sizes: tuple):
    def res_fn(flat, pts):
        params = diffnet.NetworkParams.from_flat(layer_sizes, flat)
        jet = diffnet.jet_batch(params, pts, problem.residual_orders)
        return jet[(0, 0)], residual(problem, jet)

    def grad_fn(flat, pts):
        params = diffnet.NetworkParams.from_flat(layer_sizes, flat)
        jet = diffnet.jet_batch(params, pts, problem.gradient_orders)
        return grad_residuals(problem, jet)

    return jax.jit(res_fn), jax.jit(grad_fn)


def generate_pseudo(state: PseudoState, params: diffnet.NetworkParams, problem: PdeProblem,
                    domain_points, gradient_filter: bool = True, iteration: int = 0):
    """Evaluate the network on the domain set and run one generation round.

    With ``gradient_filter=False`` the state must carry a single flag row and
    only the residual filter is applied.
    """
    res_fn, grad_fn = _field_fns(problem, params.layer_sizes)
    pts = jnp.asarray(domain_points)
    flat = params.flat()
    values, res = (np.asarray(a) for a in res_fn(flat, pts))
    grad = None
    if gradient_filter:
        grad = lambda cand: np.asarray(grad_fn(flat, pts[cand]))
    return pseudo_round(state, res, grad, values, np.asarray(domain_points), iteration)
