"""Dense tanh network with exact input derivatives through third order.

Input derivatives are propagated layer by layer with the closed-form
derivatives of ``tanh`` (a truncated Taylor-mode pass), so one sweep yields
every partial a PDE residual needs.  Parameter gradients of scalar losses
built from those partials come from JAX reverse mode.

Multi-indices are tuples of derivative counts per input coordinate, e.g. for
inputs ``(t, x)``: ``(0, 0)`` is the value, ``(1, 0)`` is d/dt, ``(0, 2)`` is
d2/dx2 and ``(1, 2)`` is d3/dt dx2.

Parameters flatten in canonical order: layer by layer, the weight matrix
(shape ``(n_in, n_out)``, row-major) followed by the bias vector.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping

import jax
import jax.numpy as jnp
import numpy as np

jax.config.update("jax_enable_x64", True)

MAX_ORDER = 3

MultiIndex = tuple[int, ...]


class DiffNetError(ValueError):
    pass


class DimensionMismatch(DiffNetError):
    def __init__(self, expected: int, actual: int):
        super().__init__(f"point has dimension {actual}, network expects {expected}")
        self.expected = expected
        self.actual = actual


class UnsupportedOrder(DiffNetError):
    pass


class NonFiniteError(DiffNetError):
    def __init__(self, message: str, layer: int | None = None, term: str | None = None):
        super().__init__(message)
        self.layer = layer
        self.term = term


@dataclass(frozen=True)
class NetworkParams:
    layer_sizes: tuple[int, ...]
    weights: tuple = field(repr=False)
    biases: tuple = field(repr=False)

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        if len(sizes) < 2 or any(s <= 0 for s in sizes):
            raise DiffNetError(f"invalid layer sizes {sizes}")
        if sizes[-1] != 1:
            raise DiffNetError("output layer must have size 1")
        if len(self.weights) != len(sizes) - 1 or len(self.biases) != len(sizes) - 1:
            raise DiffNetError("number of weight/bias arrays does not match layer_sizes")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if tuple(w.shape) != (sizes[k], sizes[k + 1]) or tuple(b.shape) != (sizes[k + 1],):
                raise DiffNetError(
                    f"layer {k}: weight {tuple(w.shape)} / bias {tuple(b.shape)} "
                    f"inconsistent with sizes {sizes[k]}->{sizes[k + 1]}"
                )
            # traced values (inside jit/grad) cannot be inspected
            if not isinstance(w, jax.core.Tracer) and not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise DiffNetError(f"layer {k}: non-finite parameter values")
        object.__setattr__(self, "layer_sizes", sizes)

    @property
    def n_inputs(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_params(self) -> int:
        return param_count(self.layer_sizes)

    def flat(self):
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(jnp.reshape(w, (-1,)))
            parts.append(b)
        return jnp.concatenate(parts)

    def to_numpy(self) -> np.ndarray:
        return np.asarray(self.flat(), dtype=np.float64)

    @classmethod
    def from_flat(cls, layer_sizes: Iterable[int], flat) -> "NetworkParams":
        sizes = tuple(int(s) for s in layer_sizes)
        if flat.shape != (param_count(sizes),):
            raise DiffNetError(
                f"flat vector has shape {tuple(flat.shape)}, expected ({param_count(sizes)},)"
            )
        weights, biases = [], []
        pos = 0
        for n_in, n_out in zip(sizes[:-1], sizes[1:]):
            weights.append(jnp.reshape(flat[pos:pos + n_in * n_out], (n_in, n_out)))
            pos += n_in * n_out
            biases.append(flat[pos:pos + n_out])
            pos += n_out
        return cls(sizes, tuple(weights), tuple(biases))


def param_count(layer_sizes: Iterable[int]) -> int:
    sizes = list(layer_sizes)
    return sum(a * b + b for a, b in zip(sizes[:-1], sizes[1:]))


def init_params(layer_sizes: Iterable[int], seed: int = 0) -> NetworkParams:
    """Glorot-uniform weights, zero biases."""
    sizes = tuple(int(s) for s in layer_sizes)
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6.0 / (n_in + n_out))
        weights.append(jnp.asarray(rng.uniform(-limit, limit, size=(n_in, n_out))))
        biases.append(jnp.zeros(n_out))
    return NetworkParams(sizes, tuple(weights), tuple(biases))


def zero_params(layer_sizes: Iterable[int]) -> NetworkParams:
    sizes = tuple(int(s) for s in layer_sizes)
    return NetworkParams.from_flat(sizes, jnp.zeros(param_count(sizes)))


# ---------------------------------------------------------------------------
# multi-index helpers


def _coords(mi: MultiIndex) -> tuple[int, ...]:
    """Expand counts into a sorted coordinate list: (1, 2) -> (0, 1, 1)."""
    return tuple(itertools.chain.from_iterable([i] * n for i, n in enumerate(mi)))


def _counts(coords: Iterable[int], n: int) -> MultiIndex:
    out = [0] * n
    for c in coords:
        out[c] += 1
    return tuple(out)


def check_orders(orders: Iterable[MultiIndex], n_inputs: int) -> list[MultiIndex]:
    checked = []
    for mi in orders:
        mi = tuple(int(v) for v in mi)
        if len(mi) != n_inputs or any(v < 0 for v in mi):
            raise DimensionMismatch(n_inputs, len(mi))
        if sum(mi) > MAX_ORDER:
            raise UnsupportedOrder(f"multi-index {mi} has total order {sum(mi)} > {MAX_ORDER}")
        checked.append(mi)
    return checked


def downward_closure(orders: Iterable[MultiIndex]) -> list[MultiIndex]:
    """Every multi-index componentwise below one of ``orders``, sorted by total order."""
    out = set()
    for mi in orders:
        for sub in itertools.product(*(range(v + 1) for v in mi)):
            out.add(tuple(sub))
    return sorted(out, key=lambda m: (sum(m), tuple(-v for v in m)))


# ---------------------------------------------------------------------------
# propagation


def _mul(a, b):
    if a is None or b is None:
        return None
    return a * b


def _add(*terms):
    terms = [t for t in terms if t is not None]
    if not terms:
        return None
    out = terms[0]
    for t in terms[1:]:
        out = out + t
    return out


def _activation_jet(z: dict, closure: list[MultiIndex], n: int) -> dict:
    zero = tuple([0] * n)
    s = jnp.tanh(z[zero])
    d1 = 1.0 - s * s
    d2 = -2.0 * s * d1
    d3 = -2.0 * (d1 * d1 + s * d2)
    a = {zero: s}
    for mi in closure:
        order = sum(mi)
        if order == 0:
            continue
        c = _coords(mi)
        if order == 1:
            a[mi] = _mul(d1, z[mi])
        elif order == 2:
            zi = z[_counts(c[:1], n)]
            zj = z[_counts(c[1:], n)]
            a[mi] = _add(_mul(d2, _mul(zi, zj)), _mul(d1, z[mi]))
        else:
            i, j, k = c
            zi, zj, zk = (z[_counts((v,), n)] for v in (i, j, k))
            zij, zik, zjk = (z[_counts(p, n)] for p in ((i, j), (i, k), (j, k)))
            cross = _add(_mul(zij, zk), _mul(zik, zj), _mul(zjk, zi))
            a[mi] = _add(_mul(d3, _mul(zi, _mul(zj, zk))), _mul(d2, cross), _mul(d1, z[mi]))
    return a


def _propagate(params: NetworkParams, points, closure: list[MultiIndex], check: bool = False) -> dict:
    n = params.n_inputs
    zero = tuple([0] * n)
    batch = points.shape[0]
    a: dict = {zero: points}
    for mi in closure:
        if sum(mi) == 1:
            a[mi] = jnp.broadcast_to(jnp.asarray(mi, dtype=points.dtype), (batch, n))
        elif sum(mi) > 1:
            a[mi] = None
    n_layers = len(params.weights)
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = {mi: (None if v is None else v @ w) for mi, v in a.items()}
        z[zero] = z[zero] + b
        if k < n_layers - 1:
            a = _activation_jet(z, closure, n)
        else:
            a = z
        if check:
            for mi, v in a.items():
                if v is not None and not np.all(np.isfinite(np.asarray(v))):
                    raise NonFiniteError(f"non-finite value in layer {k} for multi-index {mi}", layer=k)
    return {mi: (jnp.zeros(batch) if v is None else v[:, 0]) for mi, v in a.items()}


def jet_batch(params: NetworkParams, points, orders: Iterable[MultiIndex]) -> dict:
    """Partials for a batch of points (shape ``(B, N)``); traceable under ``jax.jit``.

    Returns a dict keyed by every requested multi-index, plus the value key,
    each mapped to an array of shape ``(B,)``.
    """
    n = params.n_inputs
    points = jnp.asarray(points)
    if points.ndim != 2 or points.shape[1] != n:
        raise DimensionMismatch(n, points.shape[-1] if points.ndim else 0)
    wanted = check_orders(orders, n)
    zero = tuple([0] * n)
    closure = downward_closure(wanted + [zero])
    full = _propagate(params, points, closure)
    return {mi: full[mi] for mi in set(wanted) | {zero}}


def forward_batch(params: NetworkParams, points):
    n = params.n_inputs
    points = jnp.asarray(points)
    if points.ndim != 2 or points.shape[1] != n:
        raise DimensionMismatch(n, points.shape[-1] if points.ndim else 0)
    a = points
    for w, b in zip(params.weights[:-1], params.biases[:-1]):
        a = jnp.tanh(a @ w + b)
    return (a @ params.weights[-1] + params.biases[-1])[:, 0]


def _as_point(params: NetworkParams, point) -> np.ndarray:
    p = np.atleast_1d(np.asarray(point, dtype=np.float64))
    if p.ndim != 1 or p.shape[0] != params.n_inputs:
        raise DimensionMismatch(params.n_inputs, p.shape[0] if p.ndim == 1 else p.size)
    return p


def forward(params: NetworkParams, point) -> float:
    p = _as_point(params, point)
    return float(forward_batch(params, p[None, :])[0])


@dataclass(frozen=True)
class DerivativeJet:
    point: tuple[float, ...]
    value: float
    partials: Mapping[MultiIndex, float]

    def __getitem__(self, mi: MultiIndex) -> float:
        mi = tuple(mi)
        if sum(mi) == 0:
            return self.value
        try:
            return self.partials[mi]
        except KeyError:
            raise KeyError(f"jet has no entry for multi-index {mi}") from None

    def __contains__(self, mi) -> bool:
        return sum(mi) == 0 or tuple(mi) in self.partials


def input_jet(params: NetworkParams, point, orders: Iterable[MultiIndex]) -> DerivativeJet:
    p = _as_point(params, point)
    wanted = check_orders(orders, params.n_inputs)
    zero = tuple([0] * params.n_inputs)
    closure = downward_closure(wanted + [zero])
    full = _propagate(params, jnp.asarray(p[None, :]), closure, check=True)
    partials = {mi: float(full[mi][0]) for mi in wanted if sum(mi) > 0}
    return DerivativeJet(tuple(p.tolist()), float(full[zero][0]), partials)


# ---------------------------------------------------------------------------
# parameter gradients


def _sum_terms(out):
    if isinstance(out, Mapping):
        total = 0.0
        for v in out.values():
            total = total + v
        return total, out
    return out, {"loss": out}


def loss_param_gradient(loss_evaluator: Callable[[NetworkParams], object], params: NetworkParams) -> np.ndarray:
    """Gradient of a scalar loss with respect to the flat parameter vector.

    ``loss_evaluator`` receives a :class:`NetworkParams` and returns either a
    scalar or a mapping of named terms whose sum is the loss.
    """
    sizes = params.layer_sizes

    def scalar(flat):
        total, terms = _sum_terms(loss_evaluator(NetworkParams.from_flat(sizes, flat)))
        return total, terms

    (total, terms), grad = jax.value_and_grad(scalar, has_aux=True)(params.flat())
    if not np.isfinite(float(total)):
        bad = next((k for k, v in terms.items() if not np.isfinite(float(v))), "loss")
        raise NonFiniteError(f"loss term {bad!r} is not finite", term=bad)
    return np.asarray(grad, dtype=np.float64)


# ---------------------------------------------------------------------------
# checkpoint files


def save_checkpoint(path, params: NetworkParams, **meta) -> None:
    """Header line with layer sizes (plus optional key=value tokens), then raw '<f8' data."""
    tokens = ["layer_sizes=" + ",".join(str(s) for s in params.layer_sizes)]
    tokens += [f"{k}={v}" for k, v in meta.items()]
    with open(path, "wb") as fh:
        fh.write((" ".join(tokens) + "\n").encode("ascii"))
        fh.write(params.to_numpy().astype("<f8").tobytes())


def load_checkpoint(path) -> tuple[NetworkParams, dict]:
    raw = Path(path).read_bytes()
    nl = raw.index(b"\n")
    meta = dict(tok.split("=", 1) for tok in raw[:nl].decode("ascii").split())
    sizes = tuple(int(s) for s in meta.pop("layer_sizes").split(","))
    flat = np.frombuffer(raw[nl + 1:], dtype="<f8")
    if flat.size != param_count(sizes):
        raise DiffNetError(f"checkpoint holds {flat.size} values, layer sizes need {param_count(sizes)}")
    return NetworkParams.from_flat(sizes, jnp.asarray(flat.astype(np.float64))), meta
