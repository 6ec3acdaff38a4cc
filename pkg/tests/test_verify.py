import json
import math

import numpy as np
import pytest
from scipy.special import iv, ivp

from colehopf.burgers import M_ODE_NOTE, BurgersProblem, m_family_linear_sq
from colehopf.errors import StageError
from colehopf.expr import parse
from colehopf.hopf import TransformedField
from colehopf.linsolve import Grid1D
from colehopf.ode import OdeProblem, reverse_synthesize
from colehopf.verify import (
    ResidualReport,
    burgers_constraint_report,
    h_family_report,
    implicit_m_report,
    m_family_report,
    ode_constraint_report,
    ode_residual,
    pde_residual,
    roundtrip_burgers,
    roundtrip_ode,
)

EXAMPLE = BurgersProblem.from_coefficients("1", "exp(x)")
BESSEL = (iv(1, 1.0), -ivp(1, 1.0))  # phi = I_1(exp(-x)) at x = 0


def tfield(grid, psi, times, mask=None):
    psi = np.asarray(psi, float)
    return TransformedField(grid, psi, np.zeros(psi.shape, bool) if mask is None else mask, 1e-8, times)


# --- PDE residual ---------------------------------------------------------------


def test_zero_field_has_exactly_zero_pde_residual():
    grid = Grid1D(0, 1, 33)
    times = np.linspace(0, 0.1, 11)
    prob = BurgersProblem.from_coefficients("1 + x^2", "exp(x)")
    rep = pde_residual(prob, tfield(grid, np.zeros((11, 33)), times))
    assert rep.linf == 0.0 and rep.l2 == 0.0 and rep.passed


def test_non_solution_is_detected_and_matches_hand_value():
    grid = Grid1D(0, 1, 257)
    times = np.linspace(0, 0.1, 101)
    psi = np.sin(grid.x)[None, :] * (1 + times[:, None])
    rep = pde_residual(EXAMPLE, tfield(grid, psi, times))
    assert rep.linf > 0.1 and not rep.passed
    # r = psi_t - psi_xx - e^x psi psi_x + psi - e^x psi^2 at x = 0.5, t = 0.05
    x, t = 0.5, 0.05
    s, c, g = math.sin(x), math.cos(x), 1 + t
    hand = s + g * s - math.exp(x) * g * g * s * c + g * s - math.exp(x) * g * g * s * s
    assert rep.residual[50, 128] == pytest.approx(hand, abs=1e-4)


def test_exclusions_trim_boundaries_and_dilate_the_mask():
    grid = Grid1D(0, 1, 41)
    times = np.linspace(0, 1, 9)
    psi = np.ones((9, 41))
    mask = np.zeros_like(psi, bool)
    mask[4, 20] = True
    psi[4, 20] = np.nan
    rep = pde_residual(BurgersProblem.from_coefficients("1", "-1"), tfield(grid, psi, times, mask))
    excluded = np.isnan(rep.residual)
    assert excluded[:, :2].all() and excluded[:, -2:].all()
    assert excluded[0].all() and excluded[-1].all()
    assert excluded[3:6, 17:24].all()
    assert not excluded[4, 16] and not excluded[2, 20]
    assert rep.linf == 0.0  # psi = 1 solves psi_t = psi_xx - psi psi_x


def test_level_selection_and_preconditions():
    grid = Grid1D(0, 1, 33)
    times = np.linspace(0, 0.1, 11)
    psi = np.sin(grid.x)[None, :] * (1 + times[:, None])
    full = pde_residual(EXAMPLE, tfield(grid, psi, times))
    one = pde_residual(EXAMPLE, tfield(grid, psi, times), levels=[3])
    assert np.isnan(one.residual[4]).all() and not np.isnan(one.residual[3, 5])
    assert one.linf <= full.linf
    with pytest.raises(ValueError):
        pde_residual(EXAMPLE, tfield(grid, psi[:2], times[:2]))
    with pytest.raises(ValueError):
        pde_residual(EXAMPLE, tfield(Grid1D(0, 1, 4), np.zeros((5, 4)), np.arange(5.0)))


def test_fully_masked_field_is_degenerate():
    grid = Grid1D(0, 1, 33)
    times = np.linspace(0, 0.1, 5)
    rep = pde_residual(EXAMPLE, tfield(grid, np.full((5, 33), np.nan), times, np.ones((5, 33), bool)))
    assert rep.degenerate and rep.verdict == "fail"
    assert rep.to_dict()["flags"] == ["degenerate field"]


# --- ODE residual ---------------------------------------------------------------


def test_constant_root_has_exactly_zero_ode_residual():
    for a in (1.0, 0.5, -2.0):
        prob = OdeProblem.from_text("1", "a", "4*a^2", "0", env={"a": a})
        grid = Grid1D(0, 3, 31)
        rep = ode_residual(prob, np.full(31, -4 * a), grid)
        assert rep.linf == 0.0


def test_linear_field_residual_hand_value():
    prob = OdeProblem.from_text("1", "a", "4*a^2", "0", env={"a": 1.0})
    grid = Grid1D(0, 2, 21)
    rep = ode_residual(prob, grid.x.copy(), grid)
    assert rep.residual[10] == pytest.approx(-6.0, abs=1e-12)  # x = 1
    np.testing.assert_allclose(rep.residual[1:-1], -(4 + 1) * grid.x[1:-1] - grid.x[1:-1] ** 2, atol=1e-10)
    assert np.isnan(rep.residual[0]) and np.isnan(rep.residual[-1])


def test_ode_residual_preconditions():
    prob = OdeProblem.from_text("1", "0", "0", "0")
    with pytest.raises(ValueError):
        ode_residual(prob, np.zeros(4), Grid1D(0, 1, 4))
    with pytest.raises(ValueError):
        ode_residual(prob, np.zeros(5), Grid1D(0, 1, 6))


# --- roundtrips -------------------------------------------------------------------


def test_classical_burgers_roundtrip_passes():
    rep = roundtrip_burgers("nu", "-1", None, Grid1D(0, 1, 257), 0.1, 1000, {"nu": 0.1})
    assert rep.passed and rep.equation == "burgers"
    assert rep.related[0].equation == "burgers-compatibility" and rep.related[0].passed
    assert any("initial profile" in n for n in rep.notes)


def test_exponential_convection_roundtrip_passes_and_converges():
    reps = [roundtrip_burgers("1", "exp(x)", None, Grid1D(0, 1, n), 0.1, nt) for n, nt in ((129, 250), (257, 1000))]
    assert reps[1].linf <= 1e-3 and reps[1].passed
    assert reps[0].linf / reps[1].linf >= 2.8


def test_incompatible_pair_stops_at_constraint_stage():
    rep = roundtrip_burgers("1", "x^2+1", None, Grid1D(0, 1, 65), 0.1, 10)
    assert rep.stage == "constraint" and rep.verdict == "fail"
    assert "field" not in rep.artifacts


def test_stage_errors_are_tagged():
    with pytest.raises(StageError) as info:
        roundtrip_burgers("-1", "1", None, Grid1D(0, 1, 33), 0.1, 10)
    assert info.value.stage == "solve"
    with pytest.raises(StageError) as info:
        roundtrip_burgers("1", "1", "ln(x - 2)", Grid1D(0, 1, 33), 0.1, 10)
    assert info.value.stage == "solve"
    with pytest.raises(StageError) as info:
        roundtrip_ode("1", "a", "4*a^2", "0", 2.0, 1.0, 0.0, Grid1D(0, 3, 31))
    assert info.value.stage in ("parse", "derive")


def test_ode_roundtrip_passes_and_converges():
    reps = [roundtrip_ode("1", "a", "4*a^2", "0", 2.0, *BESSEL, Grid1D(0, 3, n), {"a": 1.0}) for n in (1501, 3001)]
    assert reps[1].passed and reps[1].linf <= 1e-6
    assert reps[0].linf / reps[1].linf >= 2.8


def test_constraint_violating_ode_stops_at_constraint_stage():
    rep = roundtrip_ode("1", "a", "0", "0", 2.0, 1.0, 0.0, Grid1D(0, 3, 301), {"a": 1.0})
    assert rep.stage == "constraint" and rep.equation == "ode-constraint" and not rep.passed


def test_reverse_then_forward_synthetic_case_passes():
    prob = reverse_synthesize("exp(-2*x)+1", "-2", "-2", domain=(0.0, 3.0))
    rep = roundtrip_ode(prob.F, prob.W, prob.V, prob.S, 2.0, *BESSEL, Grid1D(0, 3, 3001))
    assert rep.passed


# --- identity reports -----------------------------------------------------------------


def test_identity_reports():
    x = np.linspace(0, 1, 101)
    assert not burgers_constraint_report("1", "x^2+1", x).passed
    assert burgers_constraint_report("2", "1/(3*x+1)", x).passed
    assert h_family_report(parse("1/cos(x)"), x).passed
    rep = m_family_report(m_family_linear_sq(1.0, 2.0), x)
    assert rep.passed and M_ODE_NOTE in rep.notes
    assert not ode_constraint_report(OdeProblem.from_text("1", "a", "0", "0", env={"a": 1}), x).passed
    assert implicit_m_report(1.0, 0.0, 0.0, Grid1D(0, 1, 101)).passed


def test_report_serialises_and_verdict_follows_tolerance():
    rep = ResidualReport("burgers", {"n": 3}, 2e-3, 1e-3, 0.0, 1e-3)
    assert rep.verdict == "fail"
    rep.tolerance = 2e-3
    assert rep.verdict == "pass"
    doc = roundtrip_burgers("1", "exp(x)", None, Grid1D(0, 1, 65), 0.1, 64).to_dict()
    text = json.dumps(doc)
    assert json.loads(text)["equation"] == "burgers"
    assert "related" in doc
