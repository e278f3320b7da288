import pytest
import sympy

from symkit_dc.catalog import ArbitraryElements, build_equation
from symkit_dc.errors import JetOrderError, LiftError, ResolverError
from symkit_dc.jets import (
    DifferentialSystem,
    FunctionalParameter,
    JetSpace,
    Potential,
    Prolongation,
    VectorField,
    check_symmetry,
    commutator,
    evolution_resolver,
    invariance_residuals,
    lift_truncated_operator,
    potential_system,
    prolong,
    total_derivative,
)
from symkit_dc.symbolic import Domain, is_zero, jet_symbol, parse, symbol

t, x, u, v = (symbol(n) for n in ("t", "x", "u", "v"))
u_t, u_x, u_xx = jet_symbol("u", 1, 0), jet_symbol("u", 0, 1), jet_symbol("u", 0, 2)


@pytest.fixture
def heat():
    """u_t = u_xx."""
    return build_equation(ArbitraryElements(), name="heat")


@pytest.fixture
def fujita_storm_potential():
    """v_x = u, v_t = u^(-2) u_x."""
    return potential_system(
        "fs-potential",
        [Potential("v", u, u**-2 * u_x)],
        domain=Domain(),
        rng=3,
    )


# --- Total derivatives --- #
def test_total_derivative_uses_the_chain_rule():
    space = JetSpace.of(u=2)
    assert total_derivative(u**2, "x", space) == 2 * u * u_x
    assert total_derivative(x * u_x, "x", space) == u_x + x * u_xx


def test_total_derivatives_commute():
    space = JetSpace.of(u=2, v=1)
    expr = parse("x*u^2*u_x + exp(t)*u*v")
    dxt = total_derivative(total_derivative(expr, "t", space), "x", space)
    dtx = total_derivative(total_derivative(expr, "x", space), "t", space)
    assert sympy.expand(dxt - dtx) == 0


def test_total_derivative_stays_inside_the_jet_space():
    space = JetSpace.of(u=2)
    with pytest.raises(JetOrderError):
        total_derivative(jet_symbol("u", 0, 4), "x", space)
    with pytest.raises(JetOrderError):
        total_derivative(u, "y", space)


# --- Vector fields --- #
def test_vector_field_acts_as_a_derivation():
    field_ = VectorField.parse("scaling", tau="2*t", xi="x")
    assert field_(t * x**2) == 2 * t * x**2 + 2 * t * x**2
    assert field_.variables() == {"t", "x"}


def test_vector_field_rejects_derivative_coordinates():
    with pytest.raises(JetOrderError):
        VectorField(eta=u_x)


def test_commutator():
    dt = VectorField(tau=1)
    scaling = VectorField.parse(tau="2*t", xi="x")
    bracket = commutator(dt, scaling)
    assert bracket.tau == 2
    assert bracket.xi == 0
    assert commutator(scaling, scaling).coefficients() == VectorField().coefficients()


def test_first_prolongation_coefficient():
    galilei = VectorField.parse(xi="2*t", eta="-x*u")
    prolongation = Prolongation(galilei, JetSpace.of(u=2))
    expected = -u - x * u_x
    assert sympy.expand(prolongation.coefficient("u", 0, 1) - expected) == 0


def test_prolongation_of_time_translation_is_trivial():
    table = prolong(VectorField(tau=1), JetSpace.of(u=2))
    assert table[t] == 1
    assert all(value == 0 for key, value in table.items() if key != t)
    assert u_xx in table and jet_symbol("u", 1, 1) in table


def test_prolongation_is_linear():
    space = JetSpace.of(u=2)
    first = VectorField.parse(xi="2*t", eta="-x*u")
    second = VectorField.parse(tau="2*t", xi="x", eta="u^2")
    combined = prolong(first.scaled(3) + second.scaled(-0.5), space)
    separate = (prolong(first, space), prolong(second, space))
    for key, value in combined.items():
        difference = value - (3 * separate[0][key] - sympy.Rational(1, 2) * separate[1][key])
        assert is_zero(sympy.expand(difference), trials=20, rng=1), key


# --- Systems and invariance --- #
def test_evolution_resolver_eliminates_time_derivatives(heat):
    resolved = heat.resolve(jet_symbol("u", 2, 0))
    assert sympy.expand(resolved - jet_symbol("u", 0, 4)) == 0


def test_inconsistent_resolver_is_rejected():
    space = JetSpace.of(u=2)
    system = DifferentialSystem(
        name="broken",
        jet_space=space,
        equations=(u_t - u_xx,),
        resolver=evolution_resolver(u_xx + u, "u", space),
        primary="u",
    )
    with pytest.raises(ResolverError):
        system.validate(trials=20, rng=1)


@pytest.mark.parametrize(
    "texts",
    [
        {"tau": "1"},
        {"xi": "1"},
        {"eta": "u"},
        {"tau": "2*t", "xi": "x"},
        {"xi": "2*t", "eta": "-x*u"},
        {"tau": "4*t^2", "xi": "4*t*x", "eta": "-(x^2 + 2*t)*u"},
    ],
)
def test_heat_equation_symmetries(heat, texts):
    verdict = check_symmetry(heat, VectorField.parse(**texts), trials=40, seed=5)
    assert verdict.passed
    assert verdict.verdict == "symmetry"


def test_non_symmetry_is_reported_with_a_witness(heat):
    verdict = check_symmetry(heat, VectorField.parse(eta="u^2"), trials=40, seed=5)
    assert verdict.verdict == "not-symmetry"
    assert verdict.worst > 1e-4
    assert "u_x" in verdict.witness


def test_fujita_storm_potential_symmetries(fujita_storm_potential):
    generator = VectorField.parse("t dt - v dx + u^2 du", tau="t", xi="-v", eta="u^2")
    assert check_symmetry(fujita_storm_potential, generator, trials=40, seed=11).passed
    wrong = VectorField.parse(tau="t", xi="v", eta="u^2")
    assert not check_symmetry(fujita_storm_potential, wrong, trials=40, seed=11).passed


def test_invariance_residuals_vanish_for_translations(fujita_storm_potential):
    residuals = invariance_residuals(fujita_storm_potential, VectorField(theta=1))
    assert all(sympy.expand(r) == 0 for r in residuals)


def test_potential_system_resolver_is_triangular():
    system = potential_system("coupled", [Potential("v", u, u_x + v * u)], domain=Domain(), rng=3)
    keys = [key for key, _ in system.resolver]
    assert keys.index(jet_symbol("v", 0, 2)) < keys.index(jet_symbol("u", 1, 2))
    assert sympy.expand(system.closed_resolver[u_t] - (u_xx + u**2 + v * u_x)) == 0
    system.validate(Domain(), rng=1)


# --- Potential lift --- #
def test_lift_recovers_the_u_component(fujita_storm_potential):
    truncated = VectorField.parse(tau="t", xi="-v")
    lifted = lift_truncated_operator(truncated, fujita_storm_potential)
    assert sympy.simplify(lifted.eta - u**2) == 0


def test_lift_of_eq13_generator():
    system = potential_system(
        "eq13-potential",
        [Potential("v", x ** sympy.Rational(-4, 3) * u, u**-2 * u_x)],
        domain=Domain(),
        rng=3,
    )
    lifted = lift_truncated_operator(VectorField.parse(xi="3*x*v", theta="-v^2"), system)
    expected = parse("-(v + 3*x^(-1/3)*u)*u")
    assert is_zero(lifted.eta - expected, rng=2)


def test_lift_requires_a_truncated_operator(fujita_storm_potential):
    with pytest.raises(LiftError):
        lift_truncated_operator(VectorField(eta=u), fujita_storm_potential)


# --- Functional parameters --- #
@pytest.fixture
def heat_functional():
    """phi_t = phi_vv with the k-family exp(k^2 t + k v)."""
    return FunctionalParameter(
        name="phi", argument="v", constraint="phi_t - phi_vv", template="exp(k^2*t + k*v)",
    )


def test_functional_placeholders(heat_functional):
    names = heat_functional.placeholders
    assert names["phi"] == (0, 0)
    assert names["phi_vv"] == (0, 2)
    assert names["phi_tv"] == names["phi_vt"] == (1, 1)


def test_functional_instances_satisfy_the_constraint(heat_functional):
    heat_functional.check(rng=1)
    field_ = VectorField.parse("phi dx", heat_functional.namespace(), xi="phi")
    instance = heat_functional.instantiate(field_, 1.5)
    assert not instance.xi.free_symbols - {t, v}


def test_functional_needs_three_instances():
    with pytest.raises(ValueError):
        FunctionalParameter("phi", "v", "phi_t - phi_vv", "exp(k^2*t + k*v)", k_values=(1.0, 2.0))


def test_broken_functional_instance_is_rejected():
    functional = FunctionalParameter("phi", "v", "phi_t - phi_vv", "exp(k*t + k*v)")
    with pytest.raises(LiftError):
        functional.check(rng=1)
