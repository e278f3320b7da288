"""Catalog of equations, potential systems, symmetry algebras and exact solutions.

The file format is described by the pydantic models below (the JSON schema in
``docs/catalog.schema.json`` is generated from them). The engine side turns
entries into :class:`~symkit_dc.jets.DifferentialSystem` and
:class:`~symkit_dc.jets.VectorField` values.
"""

from __future__ import annotations

import fnmatch
import logging
from dataclasses import dataclass, field, replace
from functools import cached_property, lru_cache
from pathlib import Path
from typing import Iterable, Literal, Mapping, Sequence

import numpy as np
import sympy
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from . import config
from .errors import (
    CatalogSchemaError,
    ConstraintError,
    ElementError,
    ExpressionSyntaxError,
    InconclusiveError,
    NonElementaryIntegralError,
    UnknownCatalogIdError,
)
from .jets import (
    DifferentialSystem,
    FunctionalParameter,
    JetSpace,
    Potential,
    VectorField,
    evolution_resolver,
    potential_system,
)
from .symbolic import (
    PARAMETERS,
    Domain,
    FormalAntiderivative,
    antiderivative,
    as_expr,
    is_zero,
    jet_symbol,
    make_rng,
    parse,
    quadrature_antiderivative,
    sample_residuals,
    substitute_elements,
    symbol,
    to_text,
)

LOGGER = logging.getLogger(__name__)

CATALOG_VERSION = 1
ExpectedVerdict = Literal["claimed", "audited-pass", "audited-fail"]


# --- File schema --- #
class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ParameterSpec(_Strict):
    name: str
    domain: tuple[float, float] | None = None
    exclusions: list[float] = Field(default_factory=list)
    values: list[float] | None = None

    @field_validator("name")
    @classmethod
    def _declared(cls, value: str) -> str:
        if value not in PARAMETERS:
            raise ValueError(f"{value!r} is not a declared parameter name ({', '.join(PARAMETERS)})")
        return value


class ElementsSpec(_Strict):
    f: str = "1"
    g: str = "1"
    h: str = "1"
    A: str = "1"
    B: str = "0"
    int_A: str | None = None
    int_B: str | None = None


class DomainSpec(_Strict):
    intervals: dict[str, tuple[float, float]] = Field(default_factory=dict)
    # each expression must be positive
    conditions: list[str] = Field(default_factory=list)


class PotentialSpec(_Strict):
    name: Literal["v", "w"]
    alpha: str
    shift: str | None = None
    beta: str | None = None
    gamma: str | None = None


class EquationSpec(_Strict):
    id: str
    label: str = ""
    dependent: Literal["u", "v", "w"] = "u"
    gauged: bool = True
    elements: ElementsSpec = Field(default_factory=ElementsSpec)


class CaseSpec(_Strict):
    id: str
    label: str
    kind: Literal["simplest", "general", "second-level"] = "simplest"
    constraints: list[str] = Field(default_factory=list)
    potentials: list[PotentialSpec] = Field(min_length=1)
    elements: ElementsSpec = Field(default_factory=ElementsSpec)
    parameters: list[ParameterSpec] = Field(default_factory=list)
    domain: DomainSpec = Field(default_factory=DomainSpec)
    no_potential_symmetry: bool = False
    notes: str | None = None


class FunctionalSpec(_Strict):
    name: str
    argument: Literal["t", "x", "u", "v", "w", "z"]
    constraint: str
    template: str
    k_values: list[float] = Field(min_length=3)
    substitution: str | None = None


class GeneratorSpec(_Strict):
    label: str
    tau: str | None = None
    xi: str | None = None
    eta: str | None = None
    theta: str | None = None
    zeta: str | None = None
    variant: str | None = None
    functional: str | None = None


class AlgebraSpec(_Strict):
    id: str
    system: str
    dependent: Literal["u", "v", "w"] = "u"
    elements: ElementsSpec = Field(default_factory=ElementsSpec)
    parameters: list[ParameterSpec] = Field(default_factory=list)
    domain: DomainSpec = Field(default_factory=DomainSpec)
    generators: list[GeneratorSpec] = Field(min_length=1)
    functionals: list[FunctionalSpec] = Field(default_factory=list)
    variant_of: str | None = None
    correction: str | None = None
    notes: str | None = None


class SolutionSpec(_Strict):
    id: str
    equation: str
    u: str | None = None
    potential: str | None = None
    parameters: list[ParameterSpec] = Field(default_factory=list)
    domain: DomainSpec = Field(default_factory=DomainSpec)
    expected: ExpectedVerdict = "claimed"
    status: Literal["explicit", "out-of-scope"] = "explicit"
    notes: str | None = None


class CatalogFile(_Strict):
    version: int = CATALOG_VERSION
    equations: list[EquationSpec] = Field(default_factory=list)
    cases: list[CaseSpec] = Field(default_factory=list)
    algebras: list[AlgebraSpec] = Field(default_factory=list)
    solutions: list[SolutionSpec] = Field(default_factory=list)


def json_pointer(loc: Iterable[object]) -> str:
    return "/" + "/".join(str(part).replace("~", "~0").replace("/", "~1") for part in loc)


def schema_error(exc: ValidationError) -> CatalogSchemaError:
    """First pydantic error as a CatalogSchemaError with a JSON pointer."""
    first = exc.errors()[0]
    return CatalogSchemaError(json_pointer(first["loc"]), first["msg"])


# --- Arbitrary elements --- #
def build_domain(
    spec: DomainSpec | None = None,
    parameters: Sequence[ParameterSpec] = (),
    base: Domain | None = None,
) -> Domain:
    intervals, exclusions, choices = {}, {}, {}
    for parameter in parameters:
        if parameter.values:
            choices[parameter.name] = tuple(parameter.values)
        if parameter.domain:
            intervals[parameter.name] = tuple(parameter.domain)
        if parameter.exclusions:
            exclusions[parameter.name] = tuple(parameter.exclusions)
    conditions: tuple[sympy.Expr, ...] = ()
    if spec is not None:
        intervals.update({name: tuple(bounds) for name, bounds in spec.intervals.items()})
        conditions = tuple(parse(text) for text in spec.conditions)
    domain = Domain(intervals=intervals, exclusions=exclusions, choices=choices, conditions=conditions)
    return base.merged(domain) if base is not None else domain


@dataclass(frozen=True)
class ArbitraryElements:
    """Closed forms of f, g, h (in x) and A, B (in u) with optional antiderivatives."""

    f: sympy.Expr = sympy.Integer(1)
    g: sympy.Expr = sympy.Integer(1)
    h: sympy.Expr = sympy.Integer(1)
    A: sympy.Expr = sympy.Integer(1)
    B: sympy.Expr = sympy.Integer(0)
    int_A: sympy.Expr | None = None
    int_B: sympy.Expr | None = None
    domain: Domain = field(default_factory=Domain)

    def __post_init__(self):
        for name in ("f", "g", "h", "A", "B", "int_A", "int_B"):
            value = getattr(self, name)
            if value is not None:
                object.__setattr__(self, name, as_expr(value))

    @classmethod
    def from_spec(
        cls,
        spec: ElementsSpec,
        parameters: Sequence[ParameterSpec] = (),
        domain: DomainSpec | None = None,
    ) -> "ArbitraryElements":
        values = {name: parse(getattr(spec, name)) for name in ("f", "g", "h", "A", "B")}
        # h only multiplies B; transformed elements keep theirs
        if values["B"] == 0:
            values["h"] = sympy.Integer(1)
        for name in ("int_A", "int_B"):
            text = getattr(spec, name)
            values[name] = parse(text) if text is not None else None
        return cls(**values, domain=build_domain(domain, parameters))

    def to_spec(self) -> ElementsSpec:
        return ElementsSpec(
            f=to_text(self.f), g=to_text(self.g), h=to_text(self.h),
            A=to_text(self.A), B=to_text(self.B),
            int_A=to_text(self.int_A) if self.int_A is not None else None,
            int_B=to_text(self.int_B) if self.int_B is not None else None,
        )

    def with_parameters(self, bindings: Mapping[str, float] | None) -> "ArbitraryElements":
        if not bindings:
            return self
        table = {symbol(name): as_expr(value) for name, value in bindings.items()}
        values = {
            name: (getattr(self, name).xreplace(table) if getattr(self, name) is not None else None)
            for name in ("f", "g", "h", "A", "B", "int_A", "int_B")
        }
        return replace(self, **values)

    def antiderivative_of(self, profile: str) -> sympy.Expr:
        """Closed form of intA or intB; only rational profiles free of parameters are integrated."""
        given = self.int_A if profile == "A" else self.int_B
        if given is not None:
            return given
        integrand = getattr(self, profile)
        if integrand == 0:
            return sympy.Integer(0)
        u = symbol("u")
        if integrand.free_symbols <= {u} and integrand.is_rational_function(u):
            return antiderivative(integrand, "u")
        raise NonElementaryIntegralError(
            f"no closed form of int{profile} given for {profile} = {to_text(integrand)}"
        )

    def profiles(self, expr: sympy.Expr | None = None) -> dict[str, sympy.Expr]:
        """Profile table for substitute_elements; antiderivatives only when *expr* needs them."""
        table = {name: getattr(self, name) for name in ("f", "g", "h", "A", "B")}
        needed = {node.func.__name__ for node in expr.atoms(FormalAntiderivative)} if expr is not None else set()
        for profile in ("A", "B"):
            if f"int{profile}" in needed:
                table[f"int{profile}"] = self.evaluable_antiderivative(profile)
        return table

    def evaluable_antiderivative(self, profile: str) -> sympy.Expr:
        """Closed form of intA or intB, else a quadrature node normalised to vanish at u = 1."""
        try:
            return self.antiderivative_of(profile)
        except NonElementaryIntegralError:
            integrand = getattr(self, profile)
            LOGGER.warning(f"int{profile} of {to_text(integrand)} has no closed form; integrating numerically from u = 1")
            return quadrature_antiderivative(integrand, "u", base=1.0, name=f"quad_int{profile}")

    def resolve(self, expr: sympy.Expr) -> sympy.Expr:
        """Substitute the closed forms into a template over f(x), A(u), intB(u), ..."""
        return substitute_elements(expr, self.profiles(expr))

    def parameter_names(self) -> set[str]:
        names = set()
        for name in ("f", "g", "h", "A", "B", "int_A", "int_B"):
            value = getattr(self, name)
            if value is not None:
                names.update(s.name for s in value.free_symbols if s.name in PARAMETERS)
        return names

    def validate(self, rng=None) -> None:
        """Class conditions: f, g, h depend on x only, A, B on u only, f g A != 0, int' = profile."""
        allowed = {"f": "x", "g": "x", "h": "x", "A": "u", "B": "u", "int_A": "u", "int_B": "u"}
        for name, variable in allowed.items():
            value = getattr(self, name)
            if value is None:
                continue
            foreign = sorted(
                s.name for s in value.free_symbols
                if s.name != variable and s.name not in PARAMETERS
            )
            if foreign:
                raise ElementError(f"{name} = {to_text(value)} depends on {', '.join(foreign)}")
        product = self.f * self.g * self.A
        if product == 0:
            raise ElementError("f g A vanishes identically")
        rng = make_rng(rng)
        try:
            sampled = sample_residuals([product], self.domain, 40, rng, parameter_samples=3)
        except InconclusiveError as exc:
            raise ElementError(f"f g A cannot be evaluated on the domain: {exc}") from exc
        values = np.abs(sampled.values[0][sampled.valid])
        if (values <= config.load_settings().verification.atol).any():
            column = int(np.argmin(np.where(sampled.valid, np.abs(sampled.values[0]), np.inf)))
            raise ElementError(f"f g A vanishes at {sampled.witness(column)}")
        u = symbol("u")
        for profile in ("A", "B"):
            given = self.int_A if profile == "A" else self.int_B
            if given is None:
                continue
            check = is_zero(sympy.diff(given, u) - getattr(self, profile), self.domain, trials=40, rng=rng)
            if not check:
                raise ElementError(
                    f"d/du int{profile} differs from {profile} (residual {check.residual:.3g} at {check.witness})"
                )


def _vanishes(expr: sympy.Expr, domain: Domain) -> bool:
    if expr == 0:
        return True
    if not expr.free_symbols:
        return False
    try:
        return bool(is_zero(expr, domain, trials=20, rng=0))
    except InconclusiveError:
        return False


# --- Constructors --- #
def build_equation(
    elements: ArbitraryElements,
    dependent: str = "u",
    gauged: bool = True,
    name: str | None = None,
) -> DifferentialSystem:
    """f u_t = (A u_x)_x + h B u_x, or with g restored when *gauged* is false."""
    for profile in ("f", "g", "A"):
        if _vanishes(getattr(elements, profile), elements.domain):
            raise ElementError(f"{profile} vanishes identically; the class needs f g A != 0")
    dep = symbol(dependent)
    u = symbol("u")
    u_t, u_x, u_xx = (jet_symbol(dependent, 1, 0), jet_symbol(dependent, 0, 1), jet_symbol(dependent, 0, 2))
    A = elements.A.xreplace({u: dep})
    B = elements.B.xreplace({u: dep})
    A_u = sympy.diff(A, dep)
    f, g, h = elements.f, elements.g, elements.h
    if gauged:
        flux_terms = A_u * u_x**2 + A * u_xx
    else:
        flux_terms = sympy.diff(g, symbol("x")) * A * u_x + g * A_u * u_x**2 + g * A * u_xx
    equation = f * u_t - flux_terms - h * B * u_x
    space = JetSpace.of(**{dependent: 2})
    rhs = sympy.expand((flux_terms + h * B * u_x) / f)
    return DifferentialSystem(
        name=name or "equation",
        jet_space=space,
        equations=(sympy.expand(equation),),
        resolver=evolution_resolver(rhs, dependent, space),
        primary=dependent,
    )


def _template(text: str | None) -> sympy.Expr:
    return parse(text) if text is not None else sympy.Integer(0)


def _check_rank(system_name: str, alphas: Sequence[sympy.Expr], domain: Domain, rng) -> None:
    """Characteristics of a multi-potential system must be linearly independent."""
    sampled = sample_residuals(list(alphas), domain, 20, rng, parameter_samples=2)
    matrix = sampled.values[:, sampled.valid]
    rank = np.linalg.matrix_rank(matrix, tol=1e-8 * max(1.0, float(np.abs(matrix).max())))
    if rank < len(alphas):
        raise ConstraintError("linearly independent characteristics", f"{system_name}: numeric rank {rank}")


class Catalog:
    """Read-only view over a validated catalog file."""

    def __init__(self, data: CatalogFile):
        self.data = data
        self._equations = {entry.id: entry for entry in data.equations}
        self._cases = {entry.id: entry for entry in data.cases}
        self._algebras = {entry.id: entry for entry in data.algebras}
        self._solutions = {entry.id: entry for entry in data.solutions}

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Catalog) and self.data == other.data

    # --- lookups --- #
    def equation(self, equation_id: str) -> EquationSpec:
        try:
            return self._equations[equation_id]
        except KeyError:
            raise UnknownCatalogIdError(f"unknown equation {equation_id!r}") from None

    def case(self, case_id: str) -> CaseSpec:
        try:
            return self._cases[case_id]
        except KeyError:
            raise UnknownCatalogIdError(f"unknown potential system {case_id!r}") from None

    def cases(self, selector: str = "all") -> list[CaseSpec]:
        return [self._cases[i] for i in select_ids(self._cases, selector, "potential system")]

    def algebra(self, algebra_id: str) -> "AlgebraEntry":
        try:
            return AlgebraEntry(self._algebras[algebra_id], self)
        except KeyError:
            raise UnknownCatalogIdError(f"unknown algebra {algebra_id!r}") from None

    def algebras(self, selector: str = "all") -> list["AlgebraEntry"]:
        return [AlgebraEntry(self._algebras[i], self) for i in select_ids(self._algebras, selector, "algebra")]

    def solutions(self, equation_id: str = "fujita-storm") -> list["SolutionEntry"]:
        self.equation(equation_id)
        return [
            SolutionEntry(spec, self) for spec in self.data.solutions if spec.equation == equation_id
        ]

    # --- engine objects --- #
    def case_elements(self, case_id: str) -> ArbitraryElements:
        """Representative elements stored with a potential-system case."""
        case = self.case(case_id)
        return ArbitraryElements.from_spec(case.elements, case.parameters, case.domain)

    def build_equation(self, equation_id: str) -> DifferentialSystem:
        spec = self.equation(equation_id)
        elements = ArbitraryElements.from_spec(spec.elements)
        return build_equation(elements, spec.dependent, spec.gauged, name=equation_id)

    def build_potential_system(
        self,
        case_id: str,
        elements: ArbitraryElements | None = None,
        params: Mapping[str, float] | None = None,
        domain: Domain | None = None,
        rng=None,
    ) -> DifferentialSystem:
        """Potential system of a case for the given elements, checked and validated."""
        case = self.case(case_id)
        if elements is None:
            elements = self.case_elements(case_id)
        elements = elements.with_parameters(params)
        domain = build_domain(case.domain, case.parameters, base=elements.domain).merged(domain)
        rng = make_rng(rng)
        table = {symbol(k): as_expr(v) for k, v in (params or {}).items()}

        def closed(expr: sympy.Expr) -> sympy.Expr:
            return elements.resolve(expr.xreplace(table))

        for text in case.constraints:
            residual = closed(parse(text))
            if residual == 0:
                continue
            check = is_zero(residual, domain, trials=40, rng=rng)
            if not check:
                raise ConstraintError(
                    f"{text} = 0",
                    f"{case_id}: residual {check.residual:.3g} at {check.witness}",
                )

        u, u_x = symbol("u"), jet_symbol("u", 0, 1)
        A_call = parse("A(u)")
        potentials = []
        alphas = []
        for spec in case.potentials:
            alpha = closed(parse(spec.alpha))
            density = alpha * u + closed(_template(spec.shift))
            flux = None
            if spec.beta is not None or spec.gamma is not None:
                flux = closed(_template(spec.beta) * A_call * u_x + _template(spec.gamma))
            potentials.append(Potential(spec.name, sympy.expand(density), flux))
            if alpha != 0:
                alphas.append(alpha)
        if len(alphas) > 1:
            _check_rank(case_id, alphas, domain, rng)
        for alpha in alphas:
            if is_zero(alpha, domain, trials=20, rng=rng):
                raise ConstraintError("alpha != 0", f"{case_id}: characteristic vanishes")

        system = potential_system(case_id, potentials, domain=domain, rng=rng)
        system.validate(domain, rng)
        equation = build_equation(elements)
        u_t = jet_symbol("u", 1, 0)
        mismatch = system.closed_resolver[u_t] - equation.closed_resolver[u_t]
        check = is_zero(sympy.expand(mismatch), domain, trials=40, rng=rng)
        if not check:
            raise ConstraintError(
                "conservation law of the equation",
                f"{case_id}: u_t differs by {check.residual:.3g} at {check.witness}",
            )
        LOGGER.debug(f"Built potential system {case_id} with {len(potentials)} potential(s)")
        return system

    def check_expressions(self) -> None:
        """Parse every expression; errors carry the JSON pointer of the field."""
        def check(pointer: list[object], text: str | None, extra=None) -> None:
            if text is None:
                return
            try:
                parse(text, extra)
            except ExpressionSyntaxError as exc:
                raise CatalogSchemaError(json_pointer(pointer), str(exc)) from exc

        def check_elements(pointer, spec: ElementsSpec) -> None:
            for name in ElementsSpec.model_fields:
                check(pointer + ["elements", name], getattr(spec, name))

        for i, spec in enumerate(self.data.equations):
            check_elements(["equations", i], spec.elements)
        for i, spec in enumerate(self.data.cases):
            check_elements(["cases", i], spec.elements)
            for j, text in enumerate(spec.constraints):
                check(["cases", i, "constraints", j], text)
            for j, potential in enumerate(spec.potentials):
                for name in ("alpha", "shift", "beta", "gamma"):
                    check(["cases", i, "potentials", j, name], getattr(potential, name))
        for i, spec in enumerate(self.data.algebras):
            check_elements(["algebras", i], spec.elements)
            functionals = {fn.name: _functional(fn) for fn in spec.functionals}
            for j, generator in enumerate(spec.generators):
                if generator.functional and generator.functional not in functionals:
                    raise CatalogSchemaError(
                        json_pointer(["algebras", i, "generators", j, "functional"]),
                        f"undeclared functional parameter {generator.functional!r}",
                    )
                extra = functionals[generator.functional].namespace() if generator.functional else None
                for name in ("tau", "xi", "eta", "theta", "zeta"):
                    check(["algebras", i, "generators", j, name], getattr(generator, name), extra)
        for i, spec in enumerate(self.data.solutions):
            check(["solutions", i, "u"], spec.u)
            check(["solutions", i, "potential"], spec.potential)
            if spec.status == "explicit" and spec.u is None:
                raise CatalogSchemaError(json_pointer(["solutions", i, "u"]), "explicit solution without u")


def select_ids(ids: Iterable[str], selector: str, what: str = "entry") -> list[str]:
    """Exact id, id prefix (``system-1``), glob pattern or ``all``."""
    ids = list(ids)
    if selector in ("all", "*"):
        return ids
    if selector in ids:
        return [selector]
    prefix = selector.rstrip("/") + "/"
    matched = [i for i in ids if i.startswith(prefix)]
    if not matched and any(ch in selector for ch in "*?["):
        matched = fnmatch.filter(ids, selector)
    if not matched:
        raise UnknownCatalogIdError(f"no {what} matches {selector!r}")
    return matched


def _functional(spec: FunctionalSpec) -> FunctionalParameter:
    return FunctionalParameter(
        name=spec.name,
        argument=spec.argument,
        constraint=spec.constraint,
        template=spec.template,
        k_values=tuple(spec.k_values),
        substitution=spec.substitution,
    )


@dataclass(frozen=True)
class Generator:
    """A catalog generator; functional ones carry the parameter used to instantiate them."""

    label: str
    field: VectorField
    variant: str | None = None
    functional: FunctionalParameter | None = None

    def instances(self) -> list[tuple[str, VectorField]]:
        """(record suffix, vector field) pairs: one for a plain generator, one per k otherwise."""
        if self.functional is None:
            return [("", self.field)]
        return [(f"k={k:g}", self.functional.instantiate(self.field, k)) for k in self.functional.k_values]


class AlgebraEntry:
    """A printed symmetry algebra with the system it belongs to."""

    def __init__(self, spec: AlgebraSpec, catalog: Catalog):
        self.spec = spec
        self.catalog = catalog

    @property
    def id(self) -> str:
        return self.spec.id

    def __repr__(self) -> str:
        return f"AlgebraEntry({self.id!r}, {len(self.spec.generators)} generators)"

    @cached_property
    def elements(self) -> ArbitraryElements:
        return ArbitraryElements.from_spec(self.spec.elements, self.spec.parameters, self.spec.domain)

    @cached_property
    def domain(self) -> Domain:
        domain = self.elements.domain
        if self.spec.system != "equation":
            case = self.catalog.case(self.spec.system)
            domain = build_domain(case.domain, base=domain)
        return domain

    @cached_property
    def functionals(self) -> dict[str, FunctionalParameter]:
        return {spec.name: _functional(spec) for spec in self.spec.functionals}

    @cached_property
    def generators(self) -> list[Generator]:
        result = []
        for spec in self.spec.generators:
            functional = self.functionals.get(spec.functional) if spec.functional else None
            extra = functional.namespace() if functional else None
            vector = VectorField.parse(
                spec.label, extra,
                tau=spec.tau, xi=spec.xi, eta=spec.eta, theta=spec.theta, zeta=spec.zeta,
            )
            result.append(Generator(spec.label, vector, spec.variant, functional))
        return result

    def system(self, rng=None) -> DifferentialSystem:
        """Validates the elements, then builds the equation or potential system."""
        self.elements.validate(rng)
        if self.spec.system == "equation":
            return build_equation(self.elements, self.spec.dependent, name=self.id)
        return self.catalog.build_potential_system(self.spec.system, self.elements, domain=self.domain, rng=rng)

    def variables(self) -> set[str]:
        """Names a generator may reference."""
        if self.spec.system == "equation":
            dependent = {self.spec.dependent}
        else:
            dependent = {"u"} | {p.name for p in self.catalog.case(self.spec.system).potentials}
        return {"t", "x"} | dependent | self.elements.parameter_names()


class SolutionEntry:
    """A claimed exact solution of a catalog equation."""

    def __init__(self, spec: SolutionSpec, catalog: Catalog):
        self.spec = spec
        self.catalog = catalog

    @property
    def id(self) -> str:
        return self.spec.id

    @property
    def in_scope(self) -> bool:
        return self.spec.status == "explicit"

    @cached_property
    def u(self) -> sympy.Expr:
        if self.spec.u is None:
            raise ElementError(f"{self.id} has no closed-form expression")
        return parse(self.spec.u)

    @cached_property
    def potential(self) -> sympy.Expr | None:
        return parse(self.spec.potential) if self.spec.potential else None

    @cached_property
    def domain(self) -> Domain:
        return build_domain(self.spec.domain, self.spec.parameters)

    def equation(self) -> DifferentialSystem:
        return self.catalog.build_equation(self.spec.equation)


# --- Loading and round trips --- #
def parse_catalog(data: Mapping) -> Catalog:
    try:
        model = CatalogFile.model_validate(data)
    except ValidationError as exc:
        raise schema_error(exc) from exc
    catalog = Catalog(model)
    catalog.check_expressions()
    return catalog


@lru_cache(maxsize=4)
def load_catalog(path: Path = config.CATALOG_FILE) -> Catalog:
    """The YAML catalog shipped in config/ (or another YAML file)."""
    with open(path, "r", encoding="utf-8") as f:
        data = yaml.safe_load(f) or {}
    catalog = parse_catalog(data)
    LOGGER.debug(
        f"Loaded catalog {path.name}: {len(catalog.data.cases)} systems, "
        f"{len(catalog.data.algebras)} algebras, {len(catalog.data.solutions)} solutions"
    )
    return catalog


def export_catalog(path: Path, catalog: Catalog | None = None) -> Path:
    catalog = catalog or load_catalog()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(catalog.data.model_dump_json(indent=2), encoding="utf-8")
    LOGGER.info(f"Exported catalog to {path}")
    return path


def import_catalog(path: Path) -> Catalog:
    try:
        model = CatalogFile.model_validate_json(Path(path).read_text(encoding="utf-8"))
    except ValidationError as exc:
        raise schema_error(exc) from exc
    catalog = Catalog(model)
    catalog.check_expressions()
    return catalog


# --- Module-level shortcuts over the built-in catalog --- #
def get_algebras(selector: str = "all") -> list[AlgebraEntry]:
    return load_catalog().algebras(selector)


def get_solutions(equation_id: str = "fujita-storm") -> list[SolutionEntry]:
    return load_catalog().solutions(equation_id)


def build_potential_system(
    case_id: str,
    elements: ArbitraryElements | None = None,
    params: Mapping[str, float] | None = None,
    domain: Domain | None = None,
    rng=None,
) -> DifferentialSystem:
    return load_catalog().build_potential_system(case_id, elements, params, domain, rng)
