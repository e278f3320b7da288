import json
from pathlib import Path

import pytest
import sympy

from symkit_dc import config
from symkit_dc.catalog import ArbitraryElements
from symkit_dc.errors import (
    CatalogSchemaError,
    DegenerateTransformationError,
    InversionError,
    NonElementaryIntegralError,
    TransformationError,
    UnknownCatalogIdError,
)
from symkit_dc.jets import check_symmetry
from symkit_dc.symbolic import is_zero, jet_symbol, parse, symbol
from symkit_dc.transforms import (
    Solution,
    TransformationParameters,
    apply_to_elements,
    class_operator,
    compose,
    g1_preserving,
    gauge_transform,
    hodograph,
    inversion_pattern,
    invert_map,
    load_transform_spec,
    point_transformation,
    potential_shift,
    push_forward_solution,
    push_forward_system,
    push_forward_vectorfield,
    run_transform_spec,
    usual_equivalence,
)

t, x, u, v = (symbol(n) for n in ("t", "x", "u", "v"))
EXAMPLES = config.DOCS_DIR / "examples"


def assert_same_elements(first, second):
    for name in ("f", "g", "h", "A", "B"):
        difference = sympy.simplify(getattr(first, name) - getattr(second, name))
        assert difference == 0 or is_zero(difference, rng=1), name


@pytest.fixture
def sample_elements():
    """Elements with every profile non-trivial and elementary antiderivatives."""
    return ArbitraryElements(f="x", g="x^2 + 1", h="1/x", A="u", B="u^2")


# --- Inversion --- #
@pytest.mark.parametrize(
    "text, pattern",
    [("2*x + 1", "affine"), ("x^2", "rational"), ("1/x", "rational"), ("exp(x) + 1", "exp-ln"),
     ("x^(1/2)", "power"), ("exp(-t)*sin(x)", None), ("t", None)],
)
def test_inversion_pattern(text, pattern):
    assert inversion_pattern(parse(text), "x") == pattern


def test_invert_map_returns_inverse_in_the_same_symbol():
    assert invert_map(parse("ln(x) - t"), "x") == sympy.exp(x + t)
    assert invert_map(parse("-1/x"), "x") == -1 / x
    inverse = invert_map(parse("x^2"), "x")
    assert is_zero(inverse.xreplace({x: x**2}) - x, rng=1)


@pytest.mark.parametrize("text", ["-3*x^(1/2) - 9/20", "2*sqrt(x) + 1"])
def test_invert_map_of_square_roots(text):
    forward = parse(text)
    inverse = invert_map(forward, "x")
    assert is_zero(inverse.xreplace({x: forward}) - x, rng=1)


def test_invert_map_without_closed_form():
    with pytest.raises(InversionError) as excinfo:
        invert_map(parse("exp(-t)*sin(x)"), "x")
    assert "no closed-form inverse" in str(excinfo.value)


# --- Equivalence transformations --- #
def test_usual_equivalence_reduces_g():
    T = usual_equivalence(TransformationParameters(X=parse("-1/x")))
    mapped = T.apply(ArbitraryElements(g="x^2", A="u^(-2)"))
    assert mapped.g == 1
    assert sympy.simplify(mapped.f - x**-2) == 0
    assert mapped.A == u**-2


@pytest.mark.parametrize("g, X", [("x", "ln(x)"), ("4", "x/4"), ("exp(x)", "-exp(-x)")])
def test_reduction_to_g_one(g, X):
    elements = ArbitraryElements(f="x", g=g, h="1", A="u^(-2)", B="u")
    mapped = apply_to_elements(usual_equivalence(TransformationParameters(X=parse(X))), elements)
    assert is_zero(mapped.g - 1, mapped.domain, trials=30, rng=2)


def test_usual_equivalence_round_trip(sample_elements):
    params = TransformationParameters(
        delta=(2, 1, 2, 0.5, 1, 0, 1, 0, 1), eps=(2, 0.5, 4, 0), X=parse("2*x + 1"),
    )
    T = usual_equivalence(params)
    identity = compose(T, T.inverse())
    for variable in ("t", "x", "u"):
        assert sympy.simplify(identity.forward_of(variable) - symbol(variable)) == 0
    assert_same_elements(T.inverse().apply(T.apply(sample_elements)), sample_elements)


@pytest.mark.parametrize(
    "params",
    [
        TransformationParameters(delta=(0, 0, 1, 0, 1, 0, 1, 0, 1)),
        TransformationParameters(eps=(1, 0, 1, 0)),
        TransformationParameters(X=sympy.Integer(1)),
    ],
)
def test_degenerate_transformations_are_rejected(params):
    with pytest.raises(DegenerateTransformationError):
        usual_equivalence(params)


def test_gauge_echo():
    elements = ArbitraryElements(f="x", g="x^2 + 1", h="1", A="u^(-2)", B="u^(-1)")
    mapped = gauge_transform(TransformationParameters(eps=(1, 1, 1, 0))).apply(elements)
    assert_same_elements(mapped, elements)


def test_gauge_moves_a_into_b():
    elements = ArbitraryElements(A="u^(-2)", B="u^(-1)")
    mapped = gauge_transform(TransformationParameters(eps=(1, 1, 1, 1))).apply(elements)
    assert sympy.simplify(mapped.f - sympy.exp(-x)) == 0
    assert sympy.simplify(mapped.B - (u**-1 + u**-2)) == 0
    assert mapped.A == u**-2


def test_gauge_operator_identity(sample_elements):
    T = gauge_transform(TransformationParameters(eps=(2, 1.5, 0.5, 1)))
    lhs = class_operator(T.apply(sample_elements))
    rhs = T.factor(sample_elements) * class_operator(sample_elements)
    assert is_zero(sympy.expand(lhs - rhs), rng=4)


def test_gauge_inverse(sample_elements):
    T = gauge_transform(TransformationParameters(eps=(2, 0.5, 4, 1)))
    assert_same_elements(T.inverse().apply(T.apply(sample_elements)), sample_elements)


def test_gauge_inverse_when_b_is_cancelled():
    elements = ArbitraryElements(f="exp(x)", g="x^2 + 1", h="1", A="u", B="u")
    T = gauge_transform(TransformationParameters(eps=(1, 1, 1, -1)))
    mapped = T.apply(elements)
    assert mapped.B == 0
    assert is_zero(mapped.h - sympy.exp(sympy.atan(x)), rng=2)
    assert_same_elements(T.inverse().apply(mapped), elements)


def test_g1_preserving_x_map():
    elements = ArbitraryElements(A="u^(-2)", B="1")
    T = g1_preserving(TransformationParameters(delta=(1, 0, 1, 0, 2, 0.5, 1, 1, 1)), elements)
    assert sympy.simplify(T.forward_of("x") - (2 * sympy.exp(x) + sympy.Rational(1, 2))) == 0
    assert T.apply(elements).g == 1


def test_g1_preserving_needs_elementary_integrals():
    elements = ArbitraryElements(h="x", A="u^(-2)", B="u^(-1)")
    with pytest.raises(NonElementaryIntegralError) as excinfo:
        g1_preserving(TransformationParameters(delta=(1, 0, 1, 0, 1, 0, 1, 1, 1)), elements)
    assert "h = x" in str(excinfo.value)


def test_g1_preserving_requires_g_one():
    with pytest.raises(TransformationError):
        g1_preserving(TransformationParameters(), ArbitraryElements(g="x"))


def test_point_transformation_checks_its_inverse():
    forward = {"t": "t", "x": "-1/x", "u": "x*u"}
    T = point_transformation(forward, {"t": "t", "x": "-1/x", "u": "-x*u"})
    assert T.map_point({"t": 0.5, "x": 2.0, "u": 1.0}) == pytest.approx({"t": 0.5, "x": -0.5, "u": 2.0})
    with pytest.raises(InversionError):
        point_transformation(forward, {"t": "t", "x": "-1/x", "u": "x*u"})
    with pytest.raises(TransformationError):
        point_transformation({"y": "x"}, {"y": "x"})


# --- Hodograph and potential shift --- #
def test_hodograph_is_an_involution():
    T = compose(hodograph(), hodograph())
    for variable in ("t", "x", "u", "v"):
        assert T.forward_of(variable) == symbol(variable)


def test_hodograph_of_fujita_storm_is_the_heat_equation(catalog):
    elements = ArbitraryElements.from_spec(catalog.equation("fujita-storm").elements)
    mapped = hodograph().apply(elements)
    assert (mapped.f, mapped.A, mapped.B) == (1, 1, 0)
    with pytest.raises(TransformationError):
        hodograph().apply(ArbitraryElements(A="u"))


def test_hodograph_pushes_the_potential_system_forward(catalog):
    system = catalog.algebra("system-1/eq13").system(rng=1)
    image = push_forward_system(hodograph(), system)
    expected = jet_symbol("v", 0, 1) - u * v ** sympy.Rational(4, 3)
    assert is_zero(image.equations[0] - expected, rng=2)
    keys = [key for key, _ in image.resolver]
    assert keys.index(jet_symbol("v", 0, 2)) < keys.index(jet_symbol("u", 1, 2))
    assert jet_symbol("u", 1, 2) in image.closed_resolver
    image.validate(rng=3)


def test_hodograph_image_generators_are_symmetries(catalog):
    entry = catalog.algebra("system-1/eq13")
    system = entry.system(rng=1)
    image_system = push_forward_system(hodograph(), system)
    for generator in entry.generators:
        image = push_forward_vectorfield(hodograph(), generator.field, entry.domain)
        assert check_symmetry(image_system, image, trials=40, seed=9).passed, generator.label


def test_hodograph_solution_image():
    solution = Solution(u="x^(-1)", potentials={"v": "ln(x) - t"}, label="inverse-x")
    image = push_forward_solution(hodograph(), solution)
    assert sympy.simplify(image.u - sympy.exp(x + t)) == 0
    assert sympy.simplify(image.potentials["v"] - sympy.exp(x + t)) == 0


def test_solution_without_closed_form_inverse():
    solution = Solution(u="exp(-t)*cos(x)", potentials={"v": "exp(-t)*sin(x)"})
    with pytest.raises(InversionError):
        push_forward_solution(hodograph(), solution)


def test_potential_shift_keeps_the_convective_fujita_storm_equation():
    mapped = potential_shift(0.5).apply(ArbitraryElements(A="u^(-2)", B="1"))
    assert is_zero(mapped.A - u**-2, rng=1)
    assert sympy.simplify(mapped.int_B - u) == 0
    assert mapped.B == 1


def test_potential_shift_group_law():
    T = compose(potential_shift(0.5), potential_shift(-0.5))
    for variable in ("t", "x", "u", "v"):
        assert sympy.simplify(T.forward_of(variable) - symbol(variable)) == 0
    with pytest.raises(TransformationError):
        potential_shift(0.5).apply(ArbitraryElements(f="x", A="u^(-2)", B="1"))


# --- Solutions --- #
def test_solution_check(catalog):
    equation = catalog.build_equation("fujita-storm")
    check = Solution(u="x^(-1)", label="inverse-x").check(equation, trials=40, seed=3)
    assert check.passed
    assert check.fd_worst < 1e-4
    wrong = Solution(u="x^(-2)").check(equation, trials=40, seed=3)
    assert wrong.verdict == "fail"


def fujita_storm_solution(catalog, solution_id):
    return next(entry for entry in catalog.solutions("fujita-storm") if entry.id == solution_id)


@pytest.mark.parametrize("solution_id", ["fujita-storm/constant", "fujita-storm/inverse-x"])
def test_time_independent_solutions(catalog, solution_id):
    entry = fujita_storm_solution(catalog, solution_id)
    check = Solution.from_entry(entry).check(entry.equation(), trials=30, seed=1)
    assert check.passed
    assert check.fd_worst < 1e-4
    assert {"t", "x"} <= set(check.witness)


def test_potential_solution_with_vanishing_residuals(catalog):
    entry = fujita_storm_solution(catalog, "fujita-storm/inverse-x")
    elements = ArbitraryElements.from_spec(catalog.equation("fujita-storm").elements)
    system = catalog.build_potential_system("system-1", elements, domain=entry.domain, rng=2)
    solution = Solution.from_entry(entry)
    assert all(sympy.simplify(residual) == 0 for residual in solution.residuals(system))
    check = solution.check(system, trials=30, seed=2)
    assert check.passed
    assert check.fd_worst < 1e-4


# --- Transform spec files --- #
def test_spec_schema_errors():
    with pytest.raises(CatalogSchemaError) as excinfo:
        load_transform_spec(json.dumps({"kind": "bogus"}))
    assert excinfo.value.pointer == "/kind"
    with pytest.raises(CatalogSchemaError):
        load_transform_spec(json.dumps({"kind": "point", "forward": {"y": "x"}, "backward": {"y": "x"}}))


def load_example(name: str):
    return load_transform_spec(Path(EXAMPLES / name).read_text(encoding="utf-8"))


def test_gauge_echo_spec(catalog):
    result = run_transform_spec(load_example("gauge-echo.json"), catalog)
    assert parse(result["elements"]["f"]) == x
    assert parse(result["elements"]["B"]) == u**-1


def test_hodograph_solution_spec(catalog):
    result = run_transform_spec(load_example("hodograph-inverse-x.json"), catalog)
    assert sympy.simplify(parse(result["solution"]["u"]) - sympy.exp(x + t)) == 0
    assert parse(result["elements"]["A"]) == 1


def test_hodograph_algebra_spec(catalog):
    result = run_transform_spec(load_example("hodograph-eq13.json"), catalog)
    assert len(result["generators"]) == 5
    density = parse(result["system"][0].removesuffix(" = 0"))
    assert is_zero(density - (jet_symbol("v", 0, 1) - u * v ** sympy.Rational(4, 3)), rng=1)


def test_g1_nonelementary_spec(catalog):
    with pytest.raises(NonElementaryIntegralError):
        run_transform_spec(load_example("g1-nonelementary.json"), catalog)


def test_point_spec(catalog):
    result = run_transform_spec(load_example("point-system5-case2.json"), catalog)
    assert result["transformation"]["forward"]["u"] == "u*x"


def test_unknown_solution_id(catalog):
    spec = load_transform_spec(json.dumps({"kind": "hodograph", "target": {"solution": "fujita-storm/bogus"}}))
    with pytest.raises(UnknownCatalogIdError):
        run_transform_spec(spec, catalog)
