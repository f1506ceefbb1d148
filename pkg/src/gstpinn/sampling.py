"""Collocation point sets and evaluation grids.

Points are rows ``(t, x)``.  Each set draws from its own child stream of the
seed, so resizing one set leaves the others unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .problems import PdeProblem


class SamplingError(ValueError):
    pass


@dataclass(frozen=True)
class SampleCounts:
    n_domain: int = 10_000
    n_boundary: int = 402
    n_initial: int = 512
    n_labeled: int = 0
    # 0 means the gradient-residual sets alias the domain set
    n_gradient: int = 0

    def __post_init__(self):
        for name in ("n_domain", "n_boundary", "n_initial", "n_labeled", "n_gradient"):
            if getattr(self, name) < 0:
                raise SamplingError(f"{name} must be >= 0")
        if self.n_boundary % 2:
            raise SamplingError("n_boundary counts paired points at x=0 and x=L_x and must be even")


@dataclass(frozen=True)
class CollocationSets:
    domain: np.ndarray
    boundary_left: np.ndarray
    boundary_right: np.ndarray
    initial: np.ndarray
    labeled: np.ndarray
    gradient: np.ndarray | None = None

    @property
    def boundary(self) -> np.ndarray:
        return np.concatenate([self.boundary_left, self.boundary_right])

    @property
    def gradient_sets(self) -> tuple[np.ndarray, np.ndarray]:
        g = self.domain if self.gradient is None else self.gradient
        return g, g

    def equals(self, other: "CollocationSets") -> bool:
        pairs = [
            (self.domain, other.domain),
            (self.boundary_left, other.boundary_left),
            (self.boundary_right, other.boundary_right),
            (self.initial, other.initial),
            (self.labeled, other.labeled),
        ]
        if (self.gradient is None) != (other.gradient is None):
            return False
        if self.gradient is not None:
            pairs.append((self.gradient, other.gradient))
        return all(np.array_equal(a, b) for a, b in pairs)


def build_grid(n_x: int, n_t: int, bounds) -> np.ndarray:
    """Uniform tensor grid with endpoints; t is the outer (slow) index."""
    if n_x < 2 or n_t < 2:
        raise SamplingError("grid needs n_x >= 2 and n_t >= 2")
    (t0, t1), (x0, x1) = bounds
    if not (t1 > t0 and x1 > x0):
        raise SamplingError(f"degenerate bounds {bounds}")
    t = np.linspace(t0, t1, n_t)
    x = np.linspace(x0, x1, n_x)
    tt, xx = np.meshgrid(t, x, indexing="ij")
    return np.column_stack([tt.ravel(), xx.ravel()])


def _open_uniform(rng, lo, hi, size):
    return rng.uniform(np.nextafter(lo, hi), hi, size=size)


def sample_domain(problem: PdeProblem, n: int, rng) -> np.ndarray:
    (t0, t1), (x0, x1) = problem.bounds
    return np.column_stack([_open_uniform(rng, t0, t1, n), _open_uniform(rng, x0, x1, n)])


def sample_sets(problem: PdeProblem, counts: SampleCounts, seed: int, reference=None) -> CollocationSets:
    (t0, t1), (x0, x1) = problem.bounds
    streams = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(5)]

    domain = sample_domain(problem, counts.n_domain, streams[0])

    n_pairs = counts.n_boundary // 2
    tb = streams[1].uniform(t0, t1, n_pairs)
    left = np.column_stack([tb, np.full(n_pairs, x0)])
    right = np.column_stack([tb, np.full(n_pairs, x1)])

    initial = np.column_stack([np.full(counts.n_initial, t0), streams[2].uniform(x0, x1, counts.n_initial)])

    if counts.n_labeled > 0:
        if reference is None:
            raise SamplingError("labeled points need a reference solution")
        pts = reference.points()
        if counts.n_labeled > len(pts):
            raise SamplingError(
                f"n_labeled={counts.n_labeled} exceeds reference grid size {len(pts)}"
            )
        idx = streams[3].choice(len(pts), size=counts.n_labeled, replace=False)
        labeled = np.column_stack([pts[idx], reference.values.ravel()[idx]])
    else:
        labeled = np.empty((0, 3))

    gradient = sample_domain(problem, counts.n_gradient, streams[4]) if counts.n_gradient else None
    return CollocationSets(domain, left, right, initial, labeled, gradient)
