import pytest
import sympy

from symkit_dc.catalog import (
    ArbitraryElements,
    CatalogFile,
    ElementsSpec,
    build_equation,
    export_catalog,
    get_algebras,
    get_solutions,
    import_catalog,
    parse_catalog,
    select_ids,
)
from symkit_dc.errors import (
    CatalogSchemaError,
    ConstraintError,
    ElementError,
    NonElementaryIntegralError,
    UnknownCatalogIdError,
)
from symkit_dc.jets import VectorField, check_symmetry
from symkit_dc.symbolic import PARAMETERS, is_zero, jet_symbol, parse, symbol

u, x = symbol("u"), symbol("x")


# --- Loading and selection --- #
def test_builtin_catalog_loads(catalog):
    assert catalog.data.version == 1
    assert catalog.equation("fujita-storm").elements.A == "u^(-2)"
    assert catalog.case("system-1").constraints == ["h(x) - 1"]
    assert len(catalog.algebra("system-1/eq13").generators) == 5


def test_selectors(catalog):
    ids = [entry.id for entry in catalog.algebras("system-1/case-1")]
    assert ids == ["system-1/case-1"]
    prefixed = [entry.id for entry in catalog.algebras("system-1")]
    assert "system-1/case-1" in prefixed and "system-1/eq13" in prefixed
    assert all(i.startswith("system-1/") for i in prefixed)
    assert len(catalog.algebras("all")) == len(catalog.data.algebras)


def test_select_ids_glob_and_unknown():
    ids = ["system-1/case-1", "system-1/case-2", "system-5/case-1"]
    assert select_ids(ids, "*/case-1") == ["system-1/case-1", "system-5/case-1"]
    with pytest.raises(UnknownCatalogIdError):
        select_ids(ids, "bogus")


def test_unknown_ids_raise(catalog):
    with pytest.raises(UnknownCatalogIdError):
        catalog.algebra("bogus")
    with pytest.raises(UnknownCatalogIdError):
        catalog.equation("bogus")
    with pytest.raises(UnknownCatalogIdError):
        catalog.solutions("bogus")


def test_solution_entries(catalog):
    solutions = {entry.id: entry for entry in catalog.solutions("fujita-storm")}
    assert solutions["fujita-storm/inverse-x"].in_scope
    assert solutions["fujita-storm/inverse-x"].potential == parse("ln(x) - t")
    assert not solutions["fujita-storm/source"].in_scope
    with pytest.raises(ElementError):
        solutions["fujita-storm/source"].u


# --- Schema errors --- #
def test_bad_expression_reports_json_pointer():
    data = {"equations": [{"id": "bad", "elements": {"f": "x +* 2"}}]}
    with pytest.raises(CatalogSchemaError) as excinfo:
        parse_catalog(data)
    assert excinfo.value.pointer == "/equations/0/elements/f"


def test_unknown_field_reports_json_pointer():
    data = {"algebras": [{"id": "a", "system": "equation", "generators": [{"label": "dt", "tau": "1"}], "bogus": 1}]}
    with pytest.raises(CatalogSchemaError) as excinfo:
        parse_catalog(data)
    assert excinfo.value.pointer == "/algebras/0/bogus"


def test_generator_with_undeclared_functional():
    data = {"algebras": [{
        "id": "a", "system": "equation",
        "generators": [{"label": "phi dx", "xi": "phi", "functional": "phi"}],
    }]}
    with pytest.raises(CatalogSchemaError) as excinfo:
        parse_catalog(data)
    assert excinfo.value.pointer == "/algebras/0/generators/0/functional"


def test_parameter_names_are_declared():
    data = {"algebras": [{
        "id": "a", "system": "equation", "parameters": [{"name": "lambda"}],
        "generators": [{"label": "dt", "tau": "1"}],
    }]}
    with pytest.raises(CatalogSchemaError):
        parse_catalog(data)


def test_export_and_import_round_trip(catalog, tmp_path):
    path = export_catalog(tmp_path / "catalog.json", catalog)
    assert import_catalog(path) == catalog
    assert CatalogFile.model_validate_json(path.read_text(encoding="utf-8")) == catalog.data


# --- Arbitrary elements --- #
def test_h_is_normalised_when_b_vanishes():
    elements = ArbitraryElements.from_spec(ElementsSpec(h="x", B="0"))
    assert elements.h == 1


def test_h_is_kept_outside_the_catalog():
    elements = ArbitraryElements(h="x", B=0)
    assert elements.h == x


def test_element_validation():
    ArbitraryElements(f="x", A="u^(-2)").validate(rng=1)
    with pytest.raises(ElementError):
        ArbitraryElements(f="x*u").validate(rng=1)
    with pytest.raises(ElementError):
        ArbitraryElements(A=0).validate(rng=1)
    with pytest.raises(ElementError):
        ArbitraryElements(B="u", int_B="u^3").validate(rng=1)


def test_antiderivatives_of_profiles():
    elements = ArbitraryElements(A="u^(-2)", B="1/u")
    assert elements.antiderivative_of("A") == -1 / u
    assert elements.antiderivative_of("B") == sympy.log(u)
    with pytest.raises(NonElementaryIntegralError):
        ArbitraryElements(A="exp(u)*mu").antiderivative_of("A")


def test_build_equation_gauged_and_ungauged():
    elements = ArbitraryElements(f="x", g="x^2", h="x", A="u^(-2)", B="u")
    u_t, u_x, u_xx = jet_symbol("u", 1, 0), jet_symbol("u", 0, 1), jet_symbol("u", 0, 2)
    ungauged = build_equation(elements, gauged=False).equations[0]
    expected = x * u_t - (2 * x * u**-2 * u_x - 2 * x**2 * u**-3 * u_x**2 + x**2 * u**-2 * u_xx) - x * u * u_x
    assert sympy.expand(ungauged - expected) == 0
    gauged = build_equation(elements).equations[0]
    assert sympy.expand(gauged - (x * u_t - (-2 * u**-3 * u_x**2 + u**-2 * u_xx) - x * u * u_x)) == 0


def test_build_equation_in_another_dependent_variable(catalog):
    heat = catalog.build_equation("heat")
    assert heat.primary == "v"
    assert heat.equations[0] == jet_symbol("v", 1, 0) - jet_symbol("v", 0, 2)


@pytest.mark.parametrize(
    "values",
    [{"f": "0", "A": "u"}, {"g": "0", "A": "u"}, {"A": "0"}, {"g": "sin(x)^2 + cos(x)^2 - 1", "A": "u"}],
)
def test_build_equation_rejects_vanishing_elements(values):
    elements = ArbitraryElements(**{name: parse(text) for name, text in values.items()})
    with pytest.raises(ElementError):
        build_equation(elements, gauged=False)


# --- Potential systems --- #
def test_system_1_potential_system(catalog):
    system = catalog.build_potential_system("system-1", rng=1)
    v_x, v_t = jet_symbol("v", 0, 1), jet_symbol("v", 1, 0)
    assert system.closed_resolver[v_x] == u
    assert sympy.simplify(system.closed_resolver[v_t] - u**-2 * jet_symbol("u", 0, 1)) == 0
    assert system.characteristic == 1


def test_system_1_rejects_h_other_than_one(catalog):
    elements = ArbitraryElements(h="x", A="u^(-2)", B="1")
    with pytest.raises(ConstraintError) as excinfo:
        catalog.build_potential_system("system-1", elements, rng=1)
    assert "h(x) - 1" in excinfo.value.condition


def test_parameters_are_bound_before_building(catalog):
    elements = ArbitraryElements(A="u^mu", B="0")
    system = catalog.build_potential_system("system-1", elements, params={"mu": 2}, rng=1)
    v_t = jet_symbol("v", 1, 0)
    assert sympy.simplify(system.closed_resolver[v_t] - u**2 * jet_symbol("u", 0, 1)) == 0


# --- Algebra entries --- #
def test_case_1_generators_verify(catalog):
    entry = catalog.algebra("system-1/case-1")
    system = entry.system(rng=1)
    for generator in entry.generators:
        verdict = check_symmetry(system, generator.field, entry.domain, trials=40, seed=3)
        assert verdict.passed, generator.label


def test_printed_case_7_gets_definitive_verdicts(catalog):
    entry = catalog.algebra("system-1/case-7")
    system = entry.system(rng=1)
    verdicts = [
        check_symmetry(system, generator.field, entry.domain, trials=40, seed=3)
        for generator in entry.generators
    ]
    assert [v.verdict for v in verdicts] == ["symmetry", "symmetry", "symmetry", "not-symmetry"]
    assert {"u", "nu"} <= set(verdicts[-1].witness)
    assert verdicts[-1].worst > 1e-4


@pytest.mark.parametrize("algebra_id", ["second-level/case-8", "second-level/case-9"])
def test_second_level_dv_points_to_the_passing_operator(catalog, algebra_id):
    entry = catalog.algebra(algebra_id)
    assert "dv + x dw" in entry.spec.notes
    system = entry.system(rng=1)
    printed = next(g for g in entry.generators if g.label == "dv")
    assert check_symmetry(system, printed.field, entry.domain, trials=30, seed=3).verdict == "not-symmetry"
    passing = VectorField.parse("dv + x dw", theta="1", zeta="x")
    assert check_symmetry(system, passing, entry.domain, trials=30, seed=3).passed


def test_plain_generators_use_known_variables(catalog):
    for entry in catalog.algebras("all"):
        allowed = entry.variables() | set(PARAMETERS)
        for generator in entry.generators:
            if generator.functional is None:
                assert generator.field.variables() <= allowed, (entry.id, generator.label)


def test_functional_generators_expand_into_instances(catalog):
    entry = catalog.algebra("system-1/case-4")
    functional = [g for g in entry.generators if g.functional is not None]
    assert functional
    instances = functional[0].instances()
    assert len(instances) >= 3
    assert all(suffix.startswith("k=") for suffix, _ in instances)


def test_eq13_characteristic(catalog):
    system = catalog.algebra("system-1/eq13").system(rng=1)
    assert is_zero(system.characteristic - parse("x^(-4/3)"), rng=1)


# --- Module shortcuts --- #
def test_module_shortcuts_read_the_builtin_catalog(catalog):
    assert [e.id for e in get_algebras("system-1/case-1")] == ["system-1/case-1"]
    assert len(get_algebras()) == len(catalog.data.algebras)
    ids = [entry.id for entry in get_solutions("fujita-storm")]
    assert "fujita-storm/inverse-x" in ids
    assert all(i.startswith("fujita-storm/") for i in ids)
    with pytest.raises(UnknownCatalogIdError):
        get_solutions("bogus")
