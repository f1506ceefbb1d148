"""Error metrics between a prediction and a reference grid.

rel_l2 is the plain discrete 2-norm ratio over the flattened grid, with no
quadrature weights.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import jax.numpy as jnp
import numpy as np

from . import diffnet

# written in place of rel_l2 when the reference is identically zero
UNDEFINED = "undefined"


class MetricsError(ValueError):
    pass


@dataclass
class ErrorReport:
    mse: float
    rel_l2: float | None
    max_abs: float
    error_field: np.ndarray | None = None

    def row(self) -> dict:
        return {
            "mse": self.mse,
            "rel_l2": UNDEFINED if self.rel_l2 is None else self.rel_l2,
            "max_abs": self.max_abs,
        }


def compare_arrays(pred, true, keep_field: bool = True) -> ErrorReport:
    pred = np.asarray(pred, dtype=np.float64)
    true = np.asarray(true, dtype=np.float64)
    if pred.shape != true.shape:
        raise MetricsError(f"shape mismatch: prediction {pred.shape}, reference {true.shape}")
    if true.size == 0:
        raise MetricsError("empty reference")
    err = pred - true
    mse = float(np.mean(err**2))
    norm = float(np.linalg.norm(true.ravel()))
    rel = float(np.linalg.norm(err.ravel()) / norm) if norm > 0 else None
    return ErrorReport(mse, rel, float(np.max(np.abs(err))), np.abs(err) if keep_field else None)


def predict_grid(params: diffnet.NetworkParams, reference) -> np.ndarray:
    """Network values on the reference grid, shape (n_t, n_x)."""
    pts = jnp.asarray(reference.points())
    return np.asarray(diffnet.forward_batch(params, pts)).reshape(reference.values.shape)


def evaluate(params: diffnet.NetworkParams, reference, keep_field: bool = True) -> ErrorReport:
    return compare_arrays(predict_grid(params, reference), reference.values, keep_field)


def write_error_field(path, reference, field: np.ndarray, **meta) -> None:
    """|u_hat - u| as a t,x,err CSV with commented metadata lines."""
    with open(path, "w", newline="") as fh:
        for k, v in meta.items():
            fh.write(f"# {k}={v}\n")
        w = csv.writer(fh)
        w.writerow(["t", "x", "abs_err"])
        for (t, x), e in zip(reference.points(), np.asarray(field).ravel()):
            w.writerow([repr(float(t)), repr(float(x)), repr(float(e))])
