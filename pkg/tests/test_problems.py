import math

import numpy as np
import pytest
import sympy as sp

from gstpinn import diffnet
from gstpinn.diffnet import DerivativeJet
from gstpinn.problems import (
    MissingJetEntry,
    PdeProblem,
    ProblemError,
    SinusoidIC,
    bc_residuals,
    clamp_count,
    grad_residuals,
    ic_value,
    residual,
)

t_, x_ = sp.symbols("t x")
ORDERS = [(a, b) for a in range(4) for b in range(4) if 0 < a + b <= 3]


def sym_jet(expr, t, x):
    subs = {t_: t, x_: x}
    partials = {mi: float(sp.diff(expr, t_, mi[0], x_, mi[1]).subs(subs)) if mi[0] else
                float(sp.diff(expr, x_, mi[1]).subs(subs)) for mi in ORDERS}
    return DerivativeJet((t, x), float(expr.subs(subs)), partials)


def sym_operator(problem, u):
    p = problem.params
    if problem.kind == "burgers":
        return sp.diff(u, t_) + u * sp.diff(u, x_) - sp.Rational(1, 100) / sp.pi * sp.diff(u, x_, 2)
    if problem.kind == "fisher":
        return sp.diff(u, t_) - sp.Rational(1, 2) * sp.diff(u, x_, 2) - sp.Rational(3, 2) * u * (1 - u)
    coeff = sp.nsimplify((1 - p.psi) / p.psi) * sp.nsimplify(p.rho_s) * sp.Float(p.k_f) * sp.nsimplify(p.n_f)
    R = 1 + coeff * u ** (sp.nsimplify(p.n_f) - 1)
    return sp.diff(u, t_) - sp.Float(p.C_d) / R * sp.diff(u, x_, 2)


def test_burgers_manufactured_x_squared():
    prob = PdeProblem.default("burgers")
    jet = sym_jet(x_**2, 0.0, 1.0)
    assert abs(residual(prob, jet) - (2 - 0.02 / math.pi)) < 1e-10
    g = grad_residuals(prob, jet)
    assert abs(g[1] - 6.0) < 1e-10
    assert g[0] == 0.0


@pytest.mark.parametrize("x", [0.3, -0.7, 1.4])
def test_burgers_x_component_is_six_x_squared(x):
    prob = PdeProblem.default("burgers")
    assert abs(grad_residuals(prob, sym_jet(x_**2, 0.5, x))[1] - 6 * x * x) < 1e-10


@pytest.mark.parametrize("kind", ["burgers", "fisher", "sorption"])
@pytest.mark.parametrize("expr", [
    sp.sin(2 * t_ + x_) * sp.exp(-t_) + 2,
    0.5 + 0.2 * x_**3 * t_ + 0.1 * t_**2,
    sp.Rational(3, 4) + sp.cos(3 * x_) * t_ / 5,
])
def test_manufactured_closure(kind, expr):
    prob = PdeProblem.default(kind)
    G = sym_operator(prob, expr)
    for t, x in [(0.2, 0.3), (0.7, 0.9)]:
        jet = sym_jet(expr, t, x)
        subs = {t_: t, x_: x}
        assert residual(prob, jet) == pytest.approx(float(G.subs(subs)), abs=1e-10, rel=1e-10)
        g = grad_residuals(prob, jet)
        assert g[0] == pytest.approx(float(sp.diff(G, t_).subs(subs)), abs=1e-10, rel=1e-10)
        assert g[1] == pytest.approx(float(sp.diff(G, x_).subs(subs)), abs=1e-10, rel=1e-10)


def test_burgers_as_printed_uses_u_xx():
    prob = PdeProblem.default("burgers", t_residual="as_printed")
    expr = sp.sin(x_) * t_
    jet = sym_jet(expr, 0.4, 0.6)
    nu = 0.01 / math.pi
    expect = (float(sp.diff(expr, t_, 2).subs({t_: 0.4, x_: 0.6}))
              + jet[(1, 0)] * jet[(0, 1)] + jet.value * jet[(1, 1)] - nu * jet[(0, 2)])
    assert grad_residuals(prob, jet)[0] == pytest.approx(expect, abs=1e-14)
    assert (1, 2) not in prob.gradient_orders


def test_fixed_points_exact():
    fisher = PdeProblem.default("fisher")
    burgers = PdeProblem.default("burgers")
    zero = {mi: 0.0 for mi in ORDERS}
    for c in (0.0, 1.0):
        jet = DerivativeJet((0.1, 0.2), c, zero)
        assert residual(fisher, jet) == 0.0
        assert np.all(grad_residuals(fisher, jet) == 0.0)
    for c in (-0.3, 0.0, 2.5):
        jet = DerivativeJet((0.1, 0.2), c, zero)
        assert residual(burgers, jet) == 0.0
        assert np.all(grad_residuals(burgers, jet) == 0.0)


def test_missing_entry_names_index():
    prob = PdeProblem.default("burgers")
    jet = DerivativeJet((0, 0), 1.0, {(1, 0): 0.0, (0, 1): 0.0})
    with pytest.raises(MissingJetEntry, match=r"\(0, 2\)"):
        residual(prob, jet)


@pytest.mark.parametrize("kind", ["burgers", "fisher", "sorption"])
def test_required_orders_minimal(kind):
    prob = PdeProblem.default(kind)
    full = {mi: 0.3 for mi in prob.required_jet_orders if sum(mi) > 0}
    residual(prob, DerivativeJet((0, 0), 0.5, full))
    grad_residuals(prob, DerivativeJet((0, 0), 0.5, full))
    for mi in list(full):
        partial = {k: v for k, v in full.items() if k != mi}
        with pytest.raises(MissingJetEntry):
            jet = DerivativeJet((0, 0), 0.5, partial)
            residual(prob, jet)
            grad_residuals(prob, jet)


@pytest.mark.parametrize("kind", ["burgers", "fisher", "sorption"])
def test_gradient_residual_matches_fd_of_residual(kind):
    prob = PdeProblem.default(kind)
    p = diffnet.init_params((2, 6, 6, 1), 3)
    if kind == "sorption":
        # keep u positive so the retardation factor is smooth
        p = diffnet.NetworkParams(p.layer_sizes, p.weights, p.biases[:-1] + (p.biases[-1] + 2.0,))
    orders = sorted(prob.required_jet_orders - {(0, 0)})
    pt = np.array([0.4, 0.55])
    g = grad_residuals(prob, diffnet.input_jet(p, pt, orders))
    h = 1e-4
    for axis in (0, 1):
        e = np.zeros(2)
        e[axis] = h
        fd = (residual(prob, diffnet.input_jet(p, pt + e, orders))
              - residual(prob, diffnet.input_jet(p, pt - e, orders))) / (2 * h)
        assert abs(g[axis] - fd) <= 1e-4 * max(abs(fd), 1e-6) + 1e-9


def test_ic_values():
    assert ic_value(PdeProblem.default("sorption"), 0.37) == 0.16395
    one = SinusoidIC(((1.0, 1, 1e-300),))
    prob = PdeProblem.default("burgers", ic=one)
    assert abs(ic_value(prob, 0.0)) < 1e-12
    half = SinusoidIC(((0.5, 2, math.pi / 2),))
    prob = PdeProblem.default("fisher", ic=half)
    assert ic_value(prob, 0.25) == pytest.approx(-0.5, abs=1e-15)
    with pytest.raises(ProblemError):
        ic_value(prob, 1.5)


def test_sinusoid_validation_and_draw():
    with pytest.raises(ProblemError):
        SinusoidIC(((1.5, 1, 1.0),))
    with pytest.raises(ProblemError):
        SinusoidIC(((0.5, 0, 1.0),))
    with pytest.raises(ProblemError):
        SinusoidIC(((0.5, 1, 0.0),))
    a, b = SinusoidIC.draw(0), SinusoidIC.draw(0)
    assert a == b and len(a.modes) == 2
    for amp, f, ph in a.modes:
        assert 0 <= amp <= 1 and 1 <= f <= 2 and 0 < ph < 2 * math.pi


def _const(u, ux=0.0):
    return DerivativeJet((0.0, 0.0), u, {(0, 1): ux})


def test_bc_residuals():
    per = PdeProblem.default("burgers")
    # u = x^2 at x=0 and x=1
    assert bc_residuals(per, (_const(0.0), _const(1.0))) == pytest.approx([-1.0])
    sorp = PdeProblem.default("sorption")
    np.testing.assert_allclose(bc_residuals(sorp, {"left": _const(1.0), "right": _const(1.0)}), [0.0, 1.0])
    cd = sorp.params.C_d
    printed = PdeProblem.default("sorption", robin="as_printed")
    # u = x / C_d
    res = bc_residuals(printed, (_const(0.0, 1 / cd), _const(1 / cd, 1 / cd)))
    assert res[1] == pytest.approx(1 / cd - 1, rel=1e-12)
    res = bc_residuals(sorp, (_const(0.0, 1 / cd), _const(1 / cd, 1 / cd)))
    assert res[1] == pytest.approx(1 / cd + 1, rel=1e-12)
    with pytest.raises(ProblemError):
        bc_residuals(sorp, {"left": _const(1.0)})


def test_sorption_clamp():
    prob = PdeProblem.default("sorption")
    jet = DerivativeJet((0.0, 0.5), -0.2, {(1, 0): 0.1, (0, 1): 0.0, (0, 2): 1.0})
    r = residual(prob, jet)
    assert math.isfinite(r)
    clamped = DerivativeJet((0.0, 0.5), 1e-6, dict(jet.partials))
    assert r == residual(prob, clamped)
    assert clamp_count(prob, np.array([-0.1, 0.5, 0.0])) == 2
    assert clamp_count(PdeProblem.default("burgers"), np.array([-1.0])) == 0


def test_param_validation():
    with pytest.raises(ProblemError):
        PdeProblem.default("burgers", eta_v=0)
    with pytest.raises(ProblemError):
        PdeProblem.default("sorption", psi=1.2)
    with pytest.raises(ProblemError):
        PdeProblem.default("sorption", n_f=1.5)
    with pytest.raises(ProblemError):
        PdeProblem.default("heat")
    assert PdeProblem.default("sorption").zeta.C_d == 4.5e-4
