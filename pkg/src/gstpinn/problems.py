"""The three benchmark PDEs on (t, x): viscous Burgers, Fisher, diffusion-sorption.

Coordinates are ordered ``(t, x)`` everywhere, so a multi-index ``(a, b)``
means ``a`` time derivatives and ``b`` space derivatives.  Residuals accept
either a :class:`~gstpinn.diffnet.DerivativeJet` (one point, returns floats)
or a dict of batched arrays from :func:`~gstpinn.diffnet.jet_batch`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Union

import jax.numpy as jnp
import numpy as np

from .diffnet import DerivativeJet

T, X = 0, 1

U, U_T, U_X = (0, 0), (1, 0), (0, 1)
U_XX, U_TX, U_TT = (0, 2), (1, 1), (2, 0)
U_XXX, U_TXX = (0, 3), (1, 2)

SORPTION_FLOOR = 1e-6

KINDS = ("burgers", "fisher", "sorption")


class ProblemError(ValueError):
    pass


class MissingJetEntry(KeyError):
    def __init__(self, mi):
        super().__init__(f"jet is missing multi-index {mi}")
        self.multi_index = mi


@dataclass(frozen=True)
class SinusoidIC:
    """Superposition ``sum_i amp_i * sin(2 pi f_i x / L + phase_i)``."""

    modes: tuple[tuple[float, int, float], ...]
    seed: int | None = None

    def __post_init__(self):
        modes = tuple((float(a), int(f), float(ph)) for a, f, ph in self.modes)
        if not modes:
            raise ProblemError("initial condition needs at least one mode")
        for a, f, ph in modes:
            if not 0.0 <= a <= 1.0:
                raise ProblemError(f"amplitude {a} outside [0, 1]")
            if f < 1:
                raise ProblemError(f"mode number {f} must be a positive integer")
            if not 0.0 < ph < 2 * math.pi:
                raise ProblemError(f"phase {ph} outside (0, 2pi)")
        object.__setattr__(self, "modes", modes)

    @classmethod
    def draw(cls, seed: int = 0, n_modes: int = 2, max_mode: int = 2) -> "SinusoidIC":
        rng = np.random.default_rng(seed)
        modes = []
        for _ in range(n_modes):
            amp = rng.uniform(0.0, 1.0)
            f = int(rng.integers(1, max_mode + 1))
            phase = rng.uniform(0.0, 2 * math.pi)
            modes.append((amp, f, phase))
        return cls(tuple(modes), seed)

    def __call__(self, x, L_x: float = 1.0):
        x = np.asarray(x, dtype=np.float64)
        out = np.zeros_like(x)
        for a, f, ph in self.modes:
            out = out + a * np.sin(2 * np.pi * f * x / L_x + ph)
        return out


def _default_ic():
    return SinusoidIC.draw(0)


@dataclass(frozen=True)
class BurgersParams:
    eta_v: float = 0.01
    L_x: float = 1.0
    T_max: float = 2.0
    ic: SinusoidIC = field(default_factory=_default_ic)
    # "corrected": (eta_v/pi) u_txx in the t-gradient residual; "as_printed": (eta_v/pi) u_xx
    t_residual: str = "corrected"

    def __post_init__(self):
        if not (self.eta_v > 0 and self.L_x > 0 and self.T_max > 0):
            raise ProblemError("Burgers needs eta_v, L_x, T_max > 0")
        if self.t_residual not in ("corrected", "as_printed"):
            raise ProblemError(f"unknown t_residual {self.t_residual!r}")

    @property
    def nu(self) -> float:
        return self.eta_v / math.pi


@dataclass(frozen=True)
class FisherParams:
    xi_v: float = 0.5
    rho_m: float = 1.5
    L_x: float = 1.0
    T_max: float = 1.0
    ic: SinusoidIC = field(default_factory=_default_ic)

    def __post_init__(self):
        if not (self.xi_v > 0 and self.rho_m > 0 and self.L_x > 0 and self.T_max > 0):
            raise ProblemError("Fisher needs xi_v, rho_m, L_x, T_max > 0")


@dataclass(frozen=True)
class SorptionParams:
    psi: float = 0.31
    k_f: float = 3.5e-4
    n_f: float = 0.875
    rho_s: float = 2875.0
    C_d: float = 4.5e-4
    u0: float = 0.16395
    T_max: float = 500.0
    L_x: float = 1.0
    inlet: float = 1.0
    # outlet Robin condition: "outflow" u = -C_d u_x (well posed), "as_printed" u = C_d u_x
    robin: str = "outflow"

    def __post_init__(self):
        if not 0 < self.psi < 1:
            raise ProblemError("porosity must lie in (0, 1)")
        if self.k_f < 0:
            raise ProblemError("k_f must be >= 0")
        if not (0 < self.n_f < 1 or self.n_f == 1):
            raise ProblemError("n_f must lie in (0, 1) or equal 1")
        if not (self.rho_s > 0 and self.C_d > 0 and self.T_max > 0 and self.L_x > 0):
            raise ProblemError("rho_s, C_d, T_max, L_x must be > 0")
        if self.robin not in ("outflow", "as_printed"):
            raise ProblemError(f"unknown robin orientation {self.robin!r}")

    @property
    def sorption_coeff(self) -> float:
        return (1 - self.psi) / self.psi * self.rho_s * self.k_f * self.n_f

    @property
    def robin_sign(self) -> float:
        return -1.0 if self.robin == "outflow" else 1.0

    def retardation(self, u):
        """R(u) = 1 + (1-psi)/psi rho_s k_f n_f u^(n_f-1), u clamped at the floor."""
        uc = np.maximum(u, SORPTION_FLOOR)
        return 1.0 + self.sorption_coeff * uc ** (self.n_f - 1.0)


Params = Union[BurgersParams, FisherParams, SorptionParams]

_PARAM_TYPES = {"burgers": BurgersParams, "fisher": FisherParams, "sorption": SorptionParams}


@dataclass(frozen=True)
class PdeProblem:
    kind: str
    params: Params

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ProblemError(f"unknown problem kind {self.kind!r}")
        if not isinstance(self.params, _PARAM_TYPES[self.kind]):
            raise ProblemError(f"{self.kind} needs {_PARAM_TYPES[self.kind].__name__}")

    @classmethod
    def default(cls, kind: str, **overrides) -> "PdeProblem":
        if kind not in KINDS:
            raise ProblemError(f"unknown problem kind {kind!r}")
        return cls(kind, _PARAM_TYPES[kind](**overrides))

    def with_params(self, **changes) -> "PdeProblem":
        return PdeProblem(self.kind, replace(self.params, **changes))

    @property
    def zeta(self) -> Params:
        return self.params

    n_coords = 2

    @property
    def periodic(self) -> bool:
        return self.kind != "sorption"

    @property
    def bounds(self) -> tuple[tuple[float, float], tuple[float, float]]:
        return (0.0, float(self.params.T_max)), (0.0, float(self.params.L_x))

    @property
    def residual_orders(self) -> frozenset:
        return frozenset({U, U_T, U_X, U_XX})

    @property
    def gradient_orders(self) -> frozenset:
        orders = {U, U_T, U_X, U_XX, U_TX, U_TT, U_XXX, U_TXX}
        if self.kind == "burgers":
            # u_t u_x and u u_tx appear; u_txx only in the corrected form
            if self.params.t_residual == "as_printed":
                orders.discard(U_TXX)
        return frozenset(orders)

    @property
    def boundary_orders(self) -> frozenset:
        return frozenset({U, U_X}) if self.kind == "sorption" else frozenset({U})

    @property
    def required_jet_orders(self) -> frozenset:
        return self.residual_orders | self.gradient_orders


def _d(jet, mi):
    try:
        return jet[mi]
    except KeyError:
        raise MissingJetEntry(mi) from None


def _finish(jet, value):
    return float(value) if isinstance(jet, DerivativeJet) else value


def residual(problem: PdeProblem, jet):
    """PDE residual G at the jet; zero for an exact solution."""
    p = problem.params
    u, ut, ux, uxx = (_d(jet, mi) for mi in (U, U_T, U_X, U_XX))
    if problem.kind == "burgers":
        g = ut + u * ux - p.nu * uxx
    elif problem.kind == "fisher":
        g = ut - p.xi_v * uxx - p.rho_m * u * (1.0 - u)
    else:
        uc = jnp.maximum(u, SORPTION_FLOOR)
        r = 1.0 + p.sorption_coeff * uc ** (p.n_f - 1.0)
        g = ut - p.C_d / r * uxx
    return _finish(jet, g)


def grad_residuals(problem: PdeProblem, jet):
    """(dG/dt, dG/dx) in coordinate order; shape (2,) or (2, B)."""
    p = problem.params
    u, ut, ux, uxx = (_d(jet, mi) for mi in (U, U_T, U_X, U_XX))
    utx, utt, uxxx = (_d(jet, mi) for mi in (U_TX, U_TT, U_XXX))
    if problem.kind == "burgers":
        g_x = utx + ux * ux + u * uxx - p.nu * uxxx
        diff_t = _d(jet, U_TXX) if p.t_residual == "corrected" else uxx
        g_t = utt + ut * ux + u * utx - p.nu * diff_t
    elif problem.kind == "fisher":
        utxx = _d(jet, U_TXX)
        g_x = utx - p.xi_v * uxxx - p.rho_m * ux * (1.0 - 2.0 * u)
        g_t = utt - p.xi_v * utxx - p.rho_m * ut * (1.0 - 2.0 * u)
    else:
        utxx = _d(jet, U_TXX)
        uc = jnp.maximum(u, SORPTION_FLOOR)
        c = p.sorption_coeff
        r = 1.0 + c * uc ** (p.n_f - 1.0)
        dr = c * (p.n_f - 1.0) * uc ** (p.n_f - 2.0)
        g_x = utx - p.C_d / r * (uxxx - ux * uxx * dr / r)
        g_t = utt - p.C_d / r * (utxx - ut * uxx * dr / r)
    if isinstance(jet, DerivativeJet):
        return np.array([float(g_t), float(g_x)])
    return jnp.stack([jnp.asarray(g_t), jnp.asarray(g_x)])


def clamp_count(problem: PdeProblem, values) -> int:
    """How many predicted values fall below the sorption floor (0 for other kinds)."""
    if problem.kind != "sorption":
        return 0
    return int(np.sum(np.asarray(values) < SORPTION_FLOOR))


def ic_value(problem: PdeProblem, x):
    p = problem.params
    xa = np.asarray(x, dtype=np.float64)
    if np.any(xa < 0) or np.any(xa > p.L_x):
        raise ProblemError(f"x outside spatial domain [0, {p.L_x}]")
    if problem.kind == "sorption":
        out = np.full_like(xa, p.u0)
    else:
        out = p.ic(xa, p.L_x)
    return float(out) if out.ndim == 0 else out


def bc_residuals(problem: PdeProblem, jets_at_boundary):
    """Boundary mismatches from jets at x=0 ("left") and x=L_x ("right").

    Periodic kinds: ``[u(t,0) - u(t,L)]``.  Sorption: ``[u(t,0) - inlet,
    u(t,1) -/+ C_d u_x(t,1)]`` with the sign set by ``params.robin``.
    ``jets_at_boundary`` is a mapping with keys "left"/"right" or a
    (left, right) pair.
    """
    if isinstance(jets_at_boundary, Mapping):
        left, right = jets_at_boundary.get("left"), jets_at_boundary.get("right")
    else:
        left, right = jets_at_boundary
    if left is None or right is None:
        raise ProblemError("boundary residuals need jets at both x=0 and x=L_x")
    p = problem.params
    scalar = isinstance(left, DerivativeJet)
    if problem.kind != "sorption":
        res = [_d(left, U) - _d(right, U)]
    else:
        res = [
            _d(left, U) - p.inlet,
            _d(right, U) - p.robin_sign * p.C_d * _d(right, U_X),
        ]
    if scalar:
        return np.array([float(r) for r in res])
    return res
