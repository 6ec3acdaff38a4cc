import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import iv, ivp

from colehopf.errors import DegenerateError
from colehopf.expr import Const, evaluate, parse, to_text
from colehopf.linsolve import Grid1D, solve_linear_ode2
from colehopf.ode import (
    LinearPotential,
    OdeProblem,
    constraint_terms,
    forward_derive,
    reduce_v1,
    reverse_synthesize,
    solve_u_ode,
)

x_sym = sp.Symbol("x")


def sym(e, env):
    out = sp.sympify(to_text(e).replace("^", "**"), locals={"x": x_sym, "a": sp.Symbol("a")}, rational=True)
    return out.subs({sp.Symbol(k): sp.Rational(repr(float(v))) for k, v in env.items()})


def example(a=1.0):
    return OdeProblem.from_text("1", "a", "4*a^2", "0", env={"a": a}, domain=(0.0, 3.0))


# --- forward derivation -----------------------------------------------------------


@pytest.mark.parametrize("a", [1.0, 0.5, -0.8])
def test_example_forward_derivation(a):
    d = forward_derive(example(a))
    xs = np.linspace(0, 3, 50)
    np.testing.assert_allclose(evaluate(d.pair.Q, xs, {"a": a}), -2.0)
    np.testing.assert_allclose(evaluate(d.pair.P, xs, {"a": a}), -2 * a)
    assert np.all(d.constraint.values == 0.0)
    assert d.compatible()


@pytest.mark.parametrize("a, C", [(1.0, 1.0), (0.5, 2.0), (1.5, -0.3)])
def test_u_equation_reproduces_closed_form_potential(a, C):
    d = forward_derive(example(a))
    grid = Grid1D(0, 3, 301)
    U = solve_u_ode(d.u_ode, C + a * a, 0.0, grid, {"a": a})
    exact = C * np.exp(-2 * a * grid.x) + a * a
    assert np.max(np.abs(U.values - exact)) <= 1e-8
    assert U(1.234) == pytest.approx(C * np.exp(-2 * a * 1.234) + a * a, abs=1e-8)
    # and the closed form satisfies the emitted equation identically
    assert d.u_ode.residual(parse("C*exp(-2*a*x) + a^2"), grid.x, {"a": a, "C": C}).passes(1e-12)


def test_violated_constraint_is_reported_not_raised():
    for a in (1.0, 0.3):
        d = forward_derive(OdeProblem.from_text("1", "a", "0", "0", env={"a": a}))
        np.testing.assert_allclose(d.constraint.values, -4 * a * a)
        assert not d.compatible()


def test_forward_derivation_errors():
    with pytest.raises(DegenerateError):
        forward_derive(OdeProblem.from_text("0", "1", "0", "0"))
    with pytest.raises(DegenerateError):
        forward_derive(OdeProblem.from_text("x - 0.5", "1", "0", "0"))
    with pytest.raises(ValueError):
        forward_derive(OdeProblem.from_text("1", "0", "0", "0", V1="1"))
    d = forward_derive(example())
    with pytest.raises(ValueError):
        solve_u_ode(d.u_ode, 2.0, 0.5, Grid1D(0, 1, 11), {"a": 1})


def test_example_solution_regression_against_bessel():
    # phi'' = (exp(-2x) + 1) phi is solved by I_1(exp(-x)); U is carried
    # between samples by cubic Hermite interpolation, so use a fine grid
    grid = Grid1D(0, 3, 3001)
    z = np.exp(-grid.x)
    d = forward_derive(example())
    U = solve_u_ode(d.u_ode, 2.0, 0.0, grid, {"a": 1.0})
    f = solve_linear_ode2(U, 0.0, iv(1, 1.0), -ivp(1, 1.0), grid)
    np.testing.assert_allclose(f.phi, iv(1, z), rtol=1e-9)
    np.testing.assert_allclose(f.dphi, -z * ivp(1, z), rtol=1e-8)


def test_sampled_and_closed_form_potentials_agree():
    grid = Grid1D(0, 3, 301)
    d = forward_derive(example())
    sampled = solve_u_ode(d.u_ode, 2.0, 0.0, grid, {"a": 1.0})
    closed = LinearPotential.from_expr("exp(-2*x)+1", x=grid.x)
    f1 = solve_linear_ode2(sampled, 0.0, 1.0, 0.0, grid)
    f2 = solve_linear_ode2(closed, 0.0, 1.0, 0.0, grid)
    assert np.max(np.abs(f1.phi - f2.phi) / f2.phi) < 1e-9
    assert closed.U0 == pytest.approx(2.0)


# --- reverse synthesis -----------------------------------------------------------


def test_reverse_synthesis_matches_symbolic_substitution():
    # psi = P + Q phi'/phi with phi'' = U phi must solve the synthesised equation
    U, P, Q = parse("exp(-2*x)+1"), parse("sin(x)"), parse("-2 - x/4")
    prob = reverse_synthesize(U, P, Q, domain=(0.0, 1.0))
    Us, Ps, Qs = (sym(e, {}) for e in (U, P, Q))
    F, W, V, S = (sym(e, {}) for e in (prob.F, prob.W, prob.V, prob.S))
    f = sp.Function("f")(x_sym)
    psi = Ps + Qs * sp.diff(f, x_sym) / f
    r = sp.diff(psi, x_sym, 2) - S - (V + F * sp.diff(psi, x_sym)) * psi - W * psi**2
    r = r.subs(sp.Derivative(f, (x_sym, 3)), sp.diff(Us * f, x_sym)).subs(sp.Derivative(f, (x_sym, 2)), Us * f)
    assert sp.simplify(r) == 0


def test_reverse_synthesis_of_the_example():
    prob = reverse_synthesize("exp(-2*a*x)+a^2", "-2*a", "-2", {"a": 1.0})
    xs = np.linspace(0, 1, 11)
    env = {"a": 1.0}
    np.testing.assert_allclose(evaluate(prob.F, xs, env), 1.0)
    np.testing.assert_allclose(evaluate(prob.W, xs, env), 1.0)
    np.testing.assert_allclose(evaluate(prob.V, xs, env), 4.0)
    np.testing.assert_allclose(evaluate(prob.S, xs, env), 0.0, atol=1e-14)


def test_reverse_synthesis_rejects_vanishing_q():
    with pytest.raises(DegenerateError):
        reverse_synthesize("1", "0", "x - 0.5")


coeff = st.floats(-1.0, 1.0)


@settings(max_examples=20, deadline=None)
@given(u=st.lists(coeff, min_size=3, max_size=3), p=st.lists(coeff, min_size=3, max_size=3),
       q=st.lists(coeff, min_size=2, max_size=2), sign=st.sampled_from([-1.0, 1.0]))
def test_reverse_then_forward_roundtrip(u, p, q, sign):
    U = parse(f"{u[0]!r} + {u[1]!r}*sin(2*x) + {u[2]!r}*exp(-x)")
    P = parse(f"{p[0]!r} + {p[1]!r}*x + {p[2]!r}*cos(3*x)")
    Q = parse(f"{sign!r}*(2 + {q[0]!r}*sin(x) + {q[1]!r}*x^2/2)")  # |Q| >= 0.5 on [0, 1]
    xs = np.linspace(0, 1, 101)
    prob = reverse_synthesize(U, P, Q, x=xs)
    d = forward_derive(prob, xs)
    for got, want in ((d.pair.Q, Q), (d.pair.P, P)):
        g, w = evaluate(got, xs), evaluate(want, xs)
        assert np.max(np.abs(g - w)) <= 1e-10 * max(1.0, np.max(np.abs(w)))
    assert d.constraint.passes(1e-8)
    assert d.u_ode.residual(U, xs).passes(1e-8)


def test_u_equation_check_is_relative_to_the_source_pieces():
    # with U = 0 every surviving term of the source cancels; the check must
    # judge that rounding against the pieces, not against their tiny sum
    xs = np.linspace(0, 1, 101)
    d = forward_derive(reverse_synthesize("0", "cos(3*x)", "-2", x=xs), xs)
    assert len(d.u_ode.h_terms) > 1
    assert d.u_ode.residual(parse("0"), xs).passes(1e-8)
    assert not d.u_ode.residual(parse("1e-3"), xs).passes(1e-8)


def test_constraint_terms_match_sympy():
    F, W, V = parse("1 + x^2"), parse("sin(x)"), parse("exp(x)")
    Fs, Ws, Vs = (sym(e, {}) for e in (F, W, V))
    expected = Vs + sp.diff(Fs, x_sym, 2) / Fs - 2 * sp.diff(Ws, x_sym) / Fs + 6 * Ws * sp.diff(Fs, x_sym) / Fs**2 \
        - 2 * sp.diff(Fs, x_sym) ** 2 / Fs**2 - 4 * Ws**2 / Fs**2
    xs = np.linspace(0, 1, 7)
    total = sum(evaluate(t, xs) for t in constraint_terms(F, W, V))
    np.testing.assert_allclose(total, sp.lambdify(x_sym, expected)(xs), rtol=1e-12)


# --- first-derivative term ---------------------------------------------------------


def test_reduce_v1_integrating_factor():
    prob = OdeProblem.from_text("1", "1", "0", "0", V1="-2/x", domain=(1.0, 2.0))
    p, reduced = reduce_v1(prob)
    xs = np.linspace(1.0, 2.0, 21)
    np.testing.assert_allclose(evaluate(p, xs), xs, rtol=1e-10)
    np.testing.assert_allclose(evaluate(reduced.F, xs), 1 / xs, rtol=1e-10)
    np.testing.assert_allclose(evaluate(reduced.W, xs), 1 / xs - 1 / xs**2, rtol=1e-10)
    np.testing.assert_allclose(evaluate(reduced.V, xs), 0.0, atol=1e-9)
    assert reduced.V1 is None


def test_reduce_v1_transports_solutions():
    # manufacture S so that psi = sin(x) + 2 solves the equation with a psi' term
    F, W, V, V1 = parse("1 + x/4"), parse("cos(x)"), parse("x"), parse("exp(-x)")
    psi = parse("sin(x) + 2")
    S = psi.diff(2) - (V + F * psi.diff()) * psi - W * psi**2 - V1 * psi.diff()
    prob = OdeProblem(F, W, V, S, V1, {}, (0.0, 1.0))
    p, red = reduce_v1(prob)
    xi = p * psi
    xs = np.linspace(0.05, 0.95, 9)
    lhs = evaluate(xi.diff(2), xs)
    rhs = evaluate(red.S + (red.V + red.F * xi.diff()) * xi + red.W * xi**2, xs)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-8, atol=1e-8)


def test_reduce_v1_without_term_is_identity():
    prob = example()
    p, red = reduce_v1(prob)
    assert p == Const(1.0) and red.F == prob.F and red.S == prob.S
