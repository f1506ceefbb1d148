"""Finite-difference reference solvers producing u(t, x) on a uniform grid.

* Burgers: conservative MUSCL (van Leer limiter) with the exact Godunov flux
  for u^2/2, central viscous term, SSP-RK3 under a CFL/diffusion bound,
  periodic in x.
* Fisher: Strang splitting of an explicit Heun reaction step around a
  Crank-Nicolson diffusion step, periodic in x (the circulant CN system is
  solved in Fourier space).
* Diffusion-sorption: implicit diffusion (variable-step BDF2, backward
  Euler start) with the retardation factor lagged by linear extrapolation,
  Dirichlet inlet and a ghost-node Robin outlet.  Steps grow geometrically
  from a tiny first step so the inlet jump at t = 0 does not spoil the order.

Every solver halves its time step until two successive runs agree to
``rtol`` in max norm on the output grid, then samples the internal grid onto
the requested one.  Internal grids are integer refinements of the output
grid so sampling is exact.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from numba import njit

from .problems import (
    SORPTION_FLOOR,
    BurgersParams,
    FisherParams,
    PdeProblem,
    SinusoidIC,
    SorptionParams,
    ic_value,
)
from .sampling import build_grid


class SolverError(RuntimeError):
    pass


@dataclass
class ReferenceSolution:
    problem: PdeProblem
    t: np.ndarray
    x: np.ndarray
    values: np.ndarray  # shape (n_t, n_x)
    solver_meta: dict = field(default_factory=dict)

    @property
    def n_t(self) -> int:
        return self.t.size

    @property
    def n_x(self) -> int:
        return self.x.size

    def points(self) -> np.ndarray:
        """Grid points in the same t-major order as ``values.ravel()``."""
        return build_grid(self.n_x, self.n_t, ((self.t[0], self.t[-1]), (self.x[0], self.x[-1])))

    def at_time(self, t: float) -> np.ndarray:
        """Linear interpolation in t of the row profile."""
        t = float(np.clip(t, self.t[0], self.t[-1]))
        k = int(np.searchsorted(self.t, t, side="right")) - 1
        k = min(max(k, 0), self.n_t - 2)
        w = (t - self.t[k]) / (self.t[k + 1] - self.t[k])
        return (1 - w) * self.values[k] + w * self.values[k + 1]

    def save(self, path, **meta) -> None:
        write_solution(path, self, **meta)


# ---------------------------------------------------------------------------
# file format


def problem_to_dict(problem: PdeProblem) -> dict:
    params = asdict(problem.params)
    if "ic" in params:
        params["ic"] = {"modes": [list(m) for m in problem.params.ic.modes], "seed": problem.params.ic.seed}
    return {"kind": problem.kind, "params": params}


def problem_from_dict(d: dict) -> PdeProblem:
    params = dict(d["params"])
    if "ic" in params:
        ic = params["ic"]
        params["ic"] = SinusoidIC(tuple(tuple(m) for m in ic["modes"]), ic.get("seed"))
    cls = {"burgers": BurgersParams, "fisher": FisherParams, "sorption": SorptionParams}[d["kind"]]
    return PdeProblem(d["kind"], cls(**params))


def _fmt(v: float) -> str:
    return repr(float(v))


def write_solution(path, sol: ReferenceSolution, **meta) -> None:
    lines = [
        "# gstpinn reference solution",
        f"# kind={sol.problem.kind}",
        "# problem=" + json.dumps(problem_to_dict(sol.problem), sort_keys=True),
        f"# n_t={sol.n_t} n_x={sol.n_x} t0={_fmt(sol.t[0])} t1={_fmt(sol.t[-1])} "
        f"x0={_fmt(sol.x[0])} x1={_fmt(sol.x[-1])}",
        "# solver=" + json.dumps(sol.solver_meta, sort_keys=True),
    ]
    for k, v in meta.items():
        lines.append(f"# {k}={v}")
    lines.append("t,x,u")
    body = [f"{_fmt(t)},{_fmt(x)},{_fmt(u)}"
            for (t, x), u in zip(sol.points(), sol.values.ravel())]
    Path(path).write_text("\n".join(lines + body) + "\n")


def read_solution(path) -> ReferenceSolution:
    header = {}
    rows = []
    with open(path) as fh:
        for line in fh:
            if line.startswith("#"):
                body = line[1:].strip()
                if body.startswith("problem="):
                    header["problem"] = json.loads(body[len("problem="):])
                elif body.startswith("solver="):
                    header["solver"] = json.loads(body[len("solver="):])
                elif body.startswith("n_t="):
                    header.update(tok.split("=", 1) for tok in body.split())
                continue
            if line.startswith("t,x,u") or not line.strip():
                continue
            rows.append([float(v) for v in line.split(",")])
    if "problem" not in header or "n_t" not in header:
        raise SolverError(f"{path} is not a reference solution file")
    n_t, n_x = int(header["n_t"]), int(header["n_x"])
    arr = np.asarray(rows)
    if arr.shape != (n_t * n_x, 3):
        raise SolverError(f"{path}: expected {n_t * n_x} rows, found {arr.shape[0]}")
    t = np.linspace(float(header["t0"]), float(header["t1"]), n_t)
    x = np.linspace(float(header["x0"]), float(header["x1"]), n_x)
    return ReferenceSolution(problem_from_dict(header["problem"]), t, x,
                             arr[:, 2].reshape(n_t, n_x), header.get("solver", {}))


# ---------------------------------------------------------------------------
# time-step refinement driver


def _refine(run, dt0: float, rtol: float, max_levels: int, scheme: str):
    prev = run(dt0)
    dt = dt0
    diffs = []
    for _ in range(max_levels):
        dt /= 2
        cur = run(dt)
        diff = float(np.max(np.abs(cur - prev)))
        diffs.append(diff)
        if not np.all(np.isfinite(cur)):
            raise SolverError(f"{scheme}: non-finite values at dt={dt:g}")
        if diff < rtol:
            return cur, {"dt": dt, "refinements": len(diffs), "last_diff": diff}
        prev = cur
    raise SolverError(
        f"{scheme}: time refinement did not reach tolerance {rtol:g} "
        f"(successive max differences {', '.join(f'{d:.3g}' for d in diffs)})"
    )


def _internal_cells(n_x: int, min_cells: int) -> tuple[int, int]:
    m = max(1, math.ceil(min_cells / (n_x - 1)))
    return m, m * (n_x - 1)


def _output_times(T: float, n_t: int) -> np.ndarray:
    return np.linspace(0.0, T, n_t)


def _steps_between(dt_out: float, dt: float) -> tuple[int, float]:
    n = max(1, math.ceil(dt_out / dt - 1e-12))
    return n, dt_out / n


# ---------------------------------------------------------------------------
# Burgers


@njit(cache=True)
def _burgers_rhs(u, dx, nu, out):
    n = u.size
    s = np.empty(n)
    for j in range(n):
        dl = u[j] - u[j - 1]
        dr = u[(j + 1) % n] - u[j]
        prod = dl * dr
        s[j] = 2.0 * prod / (dl + dr) if prod > 0.0 else 0.0
    flux = np.empty(n)
    for j in range(n):
        # exact Godunov flux for u^2/2 at face j+1/2
        jp = (j + 1) % n
        ul = u[j] + 0.5 * s[j]
        ur = u[jp] - 0.5 * s[jp]
        fl = 0.5 * ul * ul
        fr = 0.5 * ur * ur
        if ul <= ur:
            if ul > 0.0:
                flux[j] = fl
            elif ur < 0.0:
                flux[j] = fr
            else:
                flux[j] = 0.0
        else:
            flux[j] = max(fl, fr)
    inv = 1.0 / dx
    visc = nu / (dx * dx)
    for j in range(n):
        out[j] = -(flux[j] - flux[j - 1]) * inv + visc * (u[(j + 1) % n] - 2.0 * u[j] + u[j - 1])


@njit(cache=True)
def _burgers_advance(u, dx, nu, h, steps):
    n = u.size
    r = np.empty(n)
    u1 = np.empty(n)
    u2 = np.empty(n)
    u = u.copy()
    for _ in range(steps):
        _burgers_rhs(u, dx, nu, r)
        for j in range(n):
            u1[j] = u[j] + h * r[j]
        _burgers_rhs(u1, dx, nu, r)
        for j in range(n):
            u2[j] = 0.75 * u[j] + 0.25 * (u1[j] + h * r[j])
        _burgers_rhs(u2, dx, nu, r)
        for j in range(n):
            u[j] = u[j] / 3.0 + 2.0 / 3.0 * (u2[j] + h * r[j])
    return u


def _solve_burgers(p: BurgersParams, u0, t_out, dx, cfl):
    nu = p.nu
    umax = max(float(np.max(np.abs(u0))), 1e-12)
    dt_stable = cfl * min(dx / umax, dx * dx / (2 * nu))

    def run(dt):
        u = u0.copy()
        out = [u.copy()]
        for k in range(1, t_out.size):
            n, h = _steps_between(t_out[k] - t_out[k - 1], dt)
            u = _burgers_advance(u, dx, nu, h, n)
            out.append(u.copy())
        return np.array(out)

    return run, dt_stable


# ---------------------------------------------------------------------------
# Fisher


def _solve_fisher(p: FisherParams, u0, t_out, dx):
    n = u0.size
    k = np.arange(n)
    lap_eig = -4.0 / dx**2 * np.sin(np.pi * k / n) ** 2
    rho = p.rho_m

    def react(u, h):
        f = rho * u * (1 - u)
        u1 = u + h * f
        return u + 0.5 * h * (f + rho * u1 * (1 - u1))

    def run(dt):
        u = u0.copy()
        out = [u.copy()]
        cache = {}
        for j in range(1, t_out.size):
            m, h = _steps_between(t_out[j] - t_out[j - 1], dt)
            if h not in cache:
                cache[h] = (1 + 0.5 * h * p.xi_v * lap_eig) / (1 - 0.5 * h * p.xi_v * lap_eig)
            amp = cache[h]
            for _ in range(m):
                u = react(u, 0.5 * h)
                u = np.real(np.fft.ifft(amp * np.fft.fft(u)))
                u = react(u, 0.5 * h)
            out.append(u.copy())
        return np.array(out)

    return run


# ---------------------------------------------------------------------------
# diffusion-sorption


@njit(cache=True)
def _sorption_advance(u, u_prev, h_prev, hs, c, cd_dx, inlet, coeff_r, n_f, floor, sweeps):
    """Variable-step BDF2 over the step sizes ``hs`` for nodes 1..N.

    ``h_prev <= 0`` means no history yet, so the first step is backward
    Euler.  Operator rows are c (u_{j-1} - 2 u_j + u_{j+1}); the last row
    uses the ghost node u_{N+1} = u_{N-1} - 2 dx u_N / C_d.  The retardation
    factor comes from the extrapolated state, refreshed from the new iterate
    for ``sweeps - 1`` further Picard sweeps.
    """
    n = u.size
    a = np.empty(n)
    b = np.empty(n)
    d = np.empty(n)
    rhs = np.empty(n)
    cp = np.empty(n)
    guess = np.empty(n)
    for h in hs:
        if h_prev > 0.0:
            w = h / h_prev
            c_new = (1.0 + 2.0 * w) / (1.0 + w)
            c_cur = 1.0 + w
            c_old = w * w / (1.0 + w)
            for j in range(n):
                guess[j] = u[j] + w * (u[j] - u_prev[j])
        else:
            c_new, c_cur, c_old = 1.0, 1.0, 0.0
            for j in range(n):
                guess[j] = u[j]
        for _sweep in range(sweeps):
            for j in range(n):
                ue = guess[j]
                if ue < floor:
                    ue = floor
                k = h / (1.0 + coeff_r * ue ** (n_f - 1.0))
                lo = 2.0 * c if j == n - 1 else c
                di = -2.0 * c - (2.0 * c * cd_dx if j == n - 1 else 0.0)
                a[j] = -k * lo
                b[j] = c_new - k * di
                d[j] = -k * c
                rhs[j] = c_cur * u[j] - c_old * u_prev[j]
                if j == 0:
                    rhs[j] += k * c * inlet
            # Thomas algorithm
            cp[0] = d[0] / b[0]
            rhs[0] = rhs[0] / b[0]
            for j in range(1, n):
                m = b[j] - a[j] * cp[j - 1]
                cp[j] = d[j] / m
                rhs[j] = (rhs[j] - a[j] * rhs[j - 1]) / m
            for j in range(n - 2, -1, -1):
                rhs[j] -= cp[j] * rhs[j + 1]
            for j in range(n):
                guess[j] = rhs[j]
        u_prev = u.copy()
        u = guess.copy()
        h_prev = h
    return u, u_prev, h_prev


def _graded_steps(length: float, h: float, first: float, growth: float) -> np.ndarray:
    """Geometrically growing steps from ``first`` up to ``h``, then uniform, summing to ``length``."""
    steps = []
    s = first
    total = 0.0
    while s < h and total + s < length:
        steps.append(s)
        total += s
        s *= growth
    rest = length - total
    n = max(1, math.ceil(rest / h - 1e-12))
    steps.extend([rest / n] * n)
    return np.asarray(steps)


def _solve_sorption(p: SorptionParams, u0, t_out, dx, sweeps: int = 1,
                    start_fraction: float = 1e-4, growth: float = 1.5):
    """Unknowns are nodes 1..N (node 0 carries the inlet value for t > 0).

    The inlet jump at t = 0 is resolved by geometrically graded steps in the
    first output interval, starting at ``start_fraction * dt``.
    """
    if p.robin != "outflow":
        raise SolverError(
            "sorption outlet u = +C_d u_x admits an exponentially growing boundary mode "
            f"(growth rate ~ 1/C_d = {1 / p.C_d:.3g} per unit time); "
            "only robin='outflow' can be solved"
        )
    c = p.C_d / dx**2

    def run(dt):
        u = u0[1:].copy()
        u_prev = u.copy()
        h_prev = 0.0
        out = [u0.copy()]
        for j in range(1, t_out.size):
            length = t_out[j] - t_out[j - 1]
            if j == 1:
                hs = _graded_steps(length, dt, start_fraction * dt, growth)
            else:
                m, h = _steps_between(length, dt)
                hs = np.full(m, h)
            u, u_prev, h_prev = _sorption_advance(u, u_prev, h_prev, hs, c, dx / p.C_d, p.inlet,
                                                  p.sorption_coeff, p.n_f, SORPTION_FLOOR, sweeps)
            out.append(np.concatenate([[p.inlet], u]))
        return np.array(out)

    return run


# ---------------------------------------------------------------------------


def solve(problem: PdeProblem, n_x: int, n_t: int, *, min_cells: int | None = None,
          rtol: float = 1e-6, max_levels: int = 14, initial=None, cfl: float = 0.4) -> ReferenceSolution:
    """Reference solution on an ``n_t`` x ``n_x`` grid over the problem domain.

    ``initial`` optionally replaces the problem's initial condition with a
    callable of x (used for constant and fixed-point checks).
    """
    if n_x < 16 or n_t < 2:
        raise SolverError("reference grid needs n_x >= 16 and n_t >= 2")
    p = problem.params
    defaults = {"burgers": 1024, "fisher": 256, "sorption": 1024}
    m, cells = _internal_cells(n_x, min_cells or defaults[problem.kind])
    t_out = _output_times(p.T_max, n_t)
    x_out = np.linspace(0.0, p.L_x, n_x)
    dt_out = t_out[1] - t_out[0]

    if problem.periodic:
        dx = p.L_x / cells
        xs = dx * np.arange(cells)
        u0 = np.asarray(initial(xs) if initial is not None else ic_value(problem, xs), dtype=np.float64)
        u0 = np.broadcast_to(u0, xs.shape).copy()
        if problem.kind == "burgers":
            run, dt0 = _solve_burgers(p, u0, t_out, dx, cfl)
            scheme = "muscl-vanleer+godunov/central, ssp-rk3"
        else:
            run = _solve_fisher(p, u0, t_out, dx)
            dt0 = min(dt_out, 2e-3)
            scheme = "strang(heun reaction, crank-nicolson diffusion)"
        internal, info = _refine(run, dt0, rtol, max_levels, problem.kind)
        idx = (np.arange(n_x) * m) % cells
        values = internal[:, idx]
    else:
        dx = p.L_x / cells
        xs = dx * np.arange(cells + 1)
        u0 = np.asarray(initial(xs) if initial is not None else ic_value(problem, xs), dtype=np.float64)
        u0 = np.broadcast_to(u0, xs.shape).copy()
        run = _solve_sorption(p, u0, t_out, dx)
        dt0 = min(dt_out, 1.0)
        internal, info = _refine(run, dt0, rtol, max_levels, "sorption")
        values = internal[:, ::m]
        scheme = "bdf2 implicit diffusion, extrapolated retardation, ghost-node robin"

    if initial is None:
        values[0] = ic_value(problem, x_out)
    meta = {"scheme": scheme, "cells": cells, "rtol": rtol, **info}
    return ReferenceSolution(problem, t_out, x_out, values, meta)
