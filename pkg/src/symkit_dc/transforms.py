"""Equivalence transformations of the class and their action on elements,
systems, vector fields and solutions.

A transformation stores its variable maps twice: ``forward`` gives each new
variable in terms of the old ones and ``backward`` each old variable in terms
of the new ones. Both use the plain registry symbols, so an expression in the
old variables is rewritten in the new ones by a simultaneous ``xreplace`` with
the backward table.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Literal, Mapping, Sequence

import numpy as np
import sympy
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from . import config
from .catalog import (
    ArbitraryElements,
    Catalog,
    DomainSpec,
    ElementsSpec,
    build_domain,
    build_equation,
    load_catalog,
    schema_error,
)
from .errors import (
    DegenerateTransformationError,
    InconclusiveError,
    InversionError,
    NonElementaryIntegralError,
    TransformationError,
    UnknownCatalogIdError,
)
from .jets import DifferentialSystem, Potential, VectorField, potential_system, total_derivative
from .symbolic import (
    PARAMETERS,
    Domain,
    antiderivative,
    as_expr,
    evaluate_array,
    is_zero,
    jet_symbol,
    magnitude,
    make_rng,
    parse,
    sample_residuals,
    split_jet,
    symbol,
    to_text,
)

LOGGER = logging.getLogger(__name__)

POINT_VARIABLES = ("t", "x", "u", "v", "w")
IDENTITY_DELTA = (1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0)
IDENTITY_EPS = (1.0, 1.0, 1.0, 0.0)

ElementMap = Callable[[ArbitraryElements], ArbitraryElements]


# --- Inversion of variable maps --- #
_INVERSE_FUNCTIONS = (sympy.exp, sympy.log, sympy.Abs, sympy.sign)


def inversion_pattern(expr: sympy.Expr, variable: str) -> str | None:
    """affine, rational, power or exp-ln; None when no closed-form inverse is attempted."""
    var = symbol(variable)
    expr = sympy.sympify(expr)
    if not expr.has(var):
        return None
    if expr.is_polynomial(var):
        return "affine" if sympy.degree(expr, var) == 1 else ("rational" if sympy.degree(expr, var) == 2 else None)
    if expr.is_rational_function(var):
        numerator, denominator = sympy.fraction(sympy.together(expr))
        if max(sympy.degree(numerator, var), sympy.degree(denominator, var)) <= 2:
            return "rational"
        return None
    functions = {type(fn) for fn in expr.atoms(sympy.Function)}
    if any(not issubclass(fn, _INVERSE_FUNCTIONS) for fn in functions):
        return None
    if expr.has(sympy.exp) or expr.has(sympy.log):
        return "exp-ln"
    return "power"


def invert_map(expr: sympy.Expr, variable: str, domain: Domain | None = None) -> sympy.Expr:
    """Solve y = expr for *variable*; the result is written with the symbol of
    *variable* standing for y. Every other symbol keeps its meaning."""
    var = symbol(variable)
    expr = sympy.sympify(expr)
    pattern = inversion_pattern(expr, variable)
    if pattern is None:
        raise InversionError(f"no closed-form inverse of {variable} -> {to_text(expr)}")
    target = sympy.Dummy("y", real=True)
    try:
        # candidates are verified numerically on the domain below
        candidates = sympy.solve(sympy.Eq(target, expr), var, check=False)
    except NotImplementedError as exc:
        raise InversionError(f"no closed-form inverse of {variable} -> {to_text(expr)}") from exc
    domain = domain or Domain()
    for candidate in candidates:
        foreign = [
            fn for fn in candidate.atoms(sympy.Function)
            if not isinstance(fn, _INVERSE_FUNCTIONS)
        ]
        if foreign or candidate.has(sympy.I):
            continue
        round_trip = candidate.xreplace({target: expr}) - var
        try:
            if is_zero(round_trip, domain, trials=30, rng=0):
                LOGGER.debug(f"Inverted {variable} -> {to_text(expr)} ({pattern})")
                return candidate.xreplace({target: var})
        except InconclusiveError:
            continue
    raise InversionError(f"no closed-form inverse of {variable} -> {to_text(expr)} on the domain")


def _map_interval(domain: Domain, variable: str, mapping: sympy.Expr) -> tuple[float, float]:
    """Image of the sampling interval of *variable* under a monotone map of it."""
    lower, upper = domain.interval(variable)
    grid = np.linspace(lower, upper, 65)
    values = {variable: grid}
    for sym in mapping.free_symbols:
        if sym.name != variable:
            lo, hi = domain.interval(sym.name)
            values[sym.name] = np.full(grid.size, 0.5 * (lo + hi))
    image = evaluate_array(mapping, values, grid.size)
    steps = np.diff(image)
    if not np.all(np.isfinite(image)) or not (np.all(steps > 0) or np.all(steps < 0)):
        raise TransformationError(
            f"{to_text(mapping)} is not monotone on {variable} in ({lower:g}, {upper:g})"
        )
    return float(image.min()), float(image.max())


def _mapped_domain(domain: Domain, maps: Mapping[str, sympy.Expr]) -> Domain:
    intervals = dict(domain.intervals)
    for variable, mapping in maps.items():
        if mapping != symbol(variable):
            intervals[variable] = _map_interval(domain, variable, mapping)
    return Domain(
        intervals=intervals,
        exclusions=domain.exclusions,
        choices=domain.choices,
        conditions=domain.conditions,
    )


# --- Parameters and the transformation type --- #
@dataclass(frozen=True)
class TransformationParameters:
    """delta_1..delta_9, eps_1..eps_4, the x-map X(x) and the potential shift epsilon."""

    delta: tuple[float, ...] = IDENTITY_DELTA
    eps: tuple[float, ...] = IDENTITY_EPS
    X: sympy.Expr = field(default_factory=lambda: symbol("x"))
    epsilon: float = 0.0

    def __post_init__(self):
        if len(self.delta) != 9:
            raise ValueError("delta needs nine entries")
        if len(self.eps) != 4:
            raise ValueError("eps needs four entries")
        object.__setattr__(self, "delta", tuple(float(d) for d in self.delta))
        object.__setattr__(self, "eps", tuple(float(e) for e in self.eps))
        object.__setattr__(self, "X", as_expr(self.X))

    def d(self, index: int) -> sympy.Expr:
        return as_expr(self.delta[index - 1])

    def e(self, index: int) -> sympy.Expr:
        return as_expr(self.eps[index - 1])


@dataclass(frozen=True)
class EquivalenceTransformation:
    """Point map on (t, x, u[, v, w]) with an optional action on the arbitrary elements."""

    name: str
    kind: str
    forward: Mapping[str, sympy.Expr]
    backward: Mapping[str, sympy.Expr]
    element_map: ElementMap | None = field(default=None, compare=False)
    inverse_element_map: ElementMap | None = field(default=None, compare=False)
    # factor c(x) with operator(T(el)) = c * operator(el) for gauge-type maps
    factor: Callable[[ArbitraryElements], sympy.Expr] | None = field(default=None, compare=False)

    @property
    def variables(self) -> tuple[str, ...]:
        names = set(self.forward) | set(self.backward)
        return tuple(v for v in POINT_VARIABLES if v in names)

    def forward_of(self, variable: str) -> sympy.Expr:
        return self.forward.get(variable, symbol(variable))

    def backward_of(self, variable: str) -> sympy.Expr:
        return self.backward.get(variable, symbol(variable))

    def to_new(self, expr: sympy.Expr, extra: Mapping[sympy.Symbol, sympy.Expr] | None = None) -> sympy.Expr:
        """Rewrite an expression in the old variables in terms of the new ones."""
        table = {symbol(v): self.backward_of(v) for v in self.variables}
        if extra:
            table.update(extra)
        return sympy.sympify(expr).xreplace(table)

    def inverse(self) -> "EquivalenceTransformation":
        return EquivalenceTransformation(
            name=f"inverse({self.name})",
            kind=self.kind,
            forward=dict(self.backward),
            backward=dict(self.forward),
            element_map=self.inverse_element_map,
            inverse_element_map=self.element_map,
        )

    def map_point(self, point: Mapping[str, float]) -> dict[str, float]:
        values = {name: np.array([float(value)]) for name, value in point.items()}
        return {
            var: float(evaluate_array(self.forward_of(var), values, 1)[0])
            for var in POINT_VARIABLES if var in point
        }

    def apply(self, elements: ArbitraryElements) -> ArbitraryElements:
        if self.element_map is None:
            raise TransformationError(f"{self.name} does not act on arbitrary elements")
        return self.element_map(elements)

    def check_round_trip(self, domain: Domain | None = None, trials: int = 40, rng=None) -> None:
        """backward(forward(p)) = p for every variable; InversionError otherwise."""
        table = {symbol(v): self.forward_of(v) for v in self.variables}
        for variable in self.variables:
            residual = self.backward_of(variable).xreplace(table) - symbol(variable)
            if residual == 0:
                continue
            check = is_zero(residual, domain, trials=trials, rng=make_rng(rng))
            if not check:
                raise InversionError(
                    f"backward map of {self.name} does not invert {variable} "
                    f"(residual {check.residual:.3g} at {check.witness})"
                )

    def describe(self) -> dict[str, dict[str, str]]:
        return {
            "forward": {v: to_text(self.forward_of(v)) for v in self.variables},
            "backward": {v: to_text(self.backward_of(v)) for v in self.variables},
        }


def _nonzero(values: Sequence[sympy.Expr], condition: str) -> None:
    product = sympy.Mul(*values)
    if product == 0:
        raise DegenerateTransformationError(f"nondegeneracy condition {condition} fails")


def _transform_elements(
    elements: ArbitraryElements,
    *,
    f: sympy.Expr,
    g: sympy.Expr,
    h: sympy.Expr,
    A: sympy.Expr,
    B: sympy.Expr,
    int_A: sympy.Expr | None,
    int_B: sympy.Expr | None,
    x_forward: sympy.Expr,
    x_backward: sympy.Expr,
    u_forward: sympy.Expr,
    u_backward: sympy.Expr,
) -> ArbitraryElements:
    """Write new elements (given in old x, u) as functions of the new x, u."""
    x, u = symbol("x"), symbol("u")
    in_x = {x: x_backward}
    in_u = {u: u_backward}
    return ArbitraryElements(
        f=sympy.simplify(f.xreplace(in_x)),
        g=sympy.simplify(g.xreplace(in_x)),
        h=sympy.simplify(h.xreplace(in_x)),
        A=A.xreplace(in_u),
        B=B.xreplace(in_u),
        int_A=int_A.xreplace(in_u) if int_A is not None else None,
        int_B=int_B.xreplace(in_u) if int_B is not None else None,
        domain=_mapped_domain(elements.domain, {"x": x_forward, "u": u_forward}),
    )


def _optional_antiderivative(elements: ArbitraryElements, profile: str) -> sympy.Expr | None:
    try:
        return elements.antiderivative_of(profile)
    except NonElementaryIntegralError:
        return None


# --- Constructors --- #
def usual_equivalence(params: TransformationParameters, domain: Domain | None = None) -> EquivalenceTransformation:
    """t~ = d1 t + d2, x~ = X(x), u~ = d3 u + d4 with the element maps of the usual group."""
    d1, d2, d3, d4 = (params.d(i) for i in range(1, 5))
    e1, e2, e3 = params.e(1), params.e(2), params.e(3)
    _nonzero([d1, d3, e1, e2, e3], "d1 d3 e1 e2 e3 != 0")
    x, u, t = symbol("x"), symbol("u"), symbol("t")
    X = params.X
    X_x = sympy.diff(X, x)
    if X_x == 0:
        raise DegenerateTransformationError(f"X = {to_text(X)} has X_x = 0")
    domain = domain or Domain()
    try:
        if is_zero(X_x, domain, trials=20, rng=0):
            raise DegenerateTransformationError(f"X_x vanishes on the domain for X = {to_text(X)}")
    except InconclusiveError as exc:
        raise DegenerateTransformationError(f"X = {to_text(X)} is singular on the domain") from exc
    X_back = X if X == x else invert_map(X, "x", domain)
    u_forward = d3 * u + d4
    u_backward = (u - d4) / d3

    def element_map(el: ArbitraryElements) -> ArbitraryElements:
        int_A = _optional_antiderivative(el, "A")
        int_B = _optional_antiderivative(el, "B")
        return _transform_elements(
            el,
            f=e1 * d1 * el.f / X_x,
            g=e1 / e2 * X_x * el.g,
            h=e1 / e3 * el.h,
            A=e2 * el.A,
            B=e3 * el.B,
            int_A=e2 * d3 * int_A if int_A is not None else None,
            int_B=e3 * d3 * int_B if int_B is not None else None,
            x_forward=X, x_backward=X_back, u_forward=u_forward, u_backward=u_backward,
        )

    def inverse_element_map(el: ArbitraryElements) -> ArbitraryElements:
        inverse = TransformationParameters(
            delta=(1 / params.delta[0], -params.delta[1] / params.delta[0],
                   1 / params.delta[2], -params.delta[3] / params.delta[2], 1, 0, 1, 0, 1),
            eps=(1 / params.eps[0], 1 / params.eps[1], 1 / params.eps[2], 0),
            X=X_back,
        )
        return usual_equivalence(inverse, domain=_mapped_domain(domain, {"x": X})).apply(el)

    transformation = EquivalenceTransformation(
        name="usual",
        kind="usual",
        forward={"t": d1 * t + d2, "x": X, "u": u_forward},
        backward={"t": (t - d2) / d1, "x": X_back, "u": u_backward},
        element_map=element_map,
        inverse_element_map=inverse_element_map,
    )
    transformation.check_round_trip(domain)
    return transformation


def gauge_factor(elements: ArbitraryElements, eps4: sympy.Expr) -> sympy.Expr:
    """phi = exp(-eps4 int h/g dx) in closed form."""
    if eps4 == 0:
        return sympy.Integer(1)
    try:
        H = antiderivative(sympy.simplify(elements.h / elements.g), "x")
    except NonElementaryIntegralError as exc:
        raise NonElementaryIntegralError(
            f"gauge factor needs int h/g dx for h/g = {to_text(elements.h / elements.g)}"
        ) from exc
    return sympy.exp(-eps4 * H)


def gauge_transform(params: TransformationParameters) -> EquivalenceTransformation:
    """Acts on the elements only; t, x and u are not transformed."""
    e1, e2, e3, e4 = (params.e(i) for i in range(1, 5))
    _nonzero([e1, e2, e3], "e1 e2 e3 != 0")
    x, u = symbol("x"), symbol("u")

    def element_map(el: ArbitraryElements) -> ArbitraryElements:
        phi = gauge_factor(el, e4)
        int_A = _optional_antiderivative(el, "A")
        int_B = _optional_antiderivative(el, "B")
        new_int_B = None
        if int_B is not None and (e4 == 0 or int_A is not None):
            new_int_B = e3 * (int_B + e4 * (int_A if int_A is not None else 0))
        return _transform_elements(
            el,
            f=e1 * phi * el.f,
            g=e1 / e2 * phi * el.g,
            h=e1 / e3 * phi * el.h,
            A=e2 * el.A,
            B=e3 * (el.B + e4 * el.A),
            int_A=e2 * int_A if int_A is not None else None,
            int_B=new_int_B,
            x_forward=x, x_backward=x, u_forward=u, u_backward=u,
        )

    def inverse_element_map(el: ArbitraryElements) -> ArbitraryElements:
        eps = params.eps
        inverse = TransformationParameters(
            eps=(1 / eps[0], 1 / eps[1], 1 / eps[2], -eps[3] * eps[2] / eps[1])
        )
        return gauge_transform(inverse).apply(el)

    return EquivalenceTransformation(
        name="gauge",
        kind="gauge",
        forward={},
        backward={},
        element_map=element_map,
        inverse_element_map=inverse_element_map,
        factor=lambda el: e1 * gauge_factor(el, e4),
    )


def extended_equivalence(params: TransformationParameters, domain: Domain | None = None) -> EquivalenceTransformation:
    """Gauge part (eps_1..eps_4) followed by the point part (delta_1..delta_4, X)."""
    point = TransformationParameters(delta=params.delta, eps=(1, 1, 1, 0), X=params.X)
    return compose(gauge_transform(params), usual_equivalence(point, domain), name="extended", kind="extended")


def g1_preserving(
    params: TransformationParameters,
    elements: ArbitraryElements,
    domain: Domain | None = None,
) -> EquivalenceTransformation:
    """Transformations keeping g = 1; x~ = d5 int exp(d8 int h) dx + d6 needs elementary integrals."""
    d = params.d
    _nonzero([d(1), d(3), d(5), d(7), d(9)], "d1 d3 d5 d7 d9 != 0")
    if elements.g != 1:
        raise TransformationError(f"g = {to_text(elements.g)} but the transformation requires g = 1")
    x = symbol("x")
    if d(8) == 0:
        X = d(5) * x + d(6)
    else:
        try:
            H = antiderivative(elements.h, "x")
            X = d(5) * antiderivative(sympy.exp(d(8) * H), "x") + d(6)
        except NonElementaryIntegralError as exc:
            raise NonElementaryIntegralError(
                f"x-map needs int exp(d8 int h dx) dx, not elementary for h = {to_text(elements.h)}"
            ) from exc
    gauge = TransformationParameters(eps=(params.delta[8], params.delta[4] * params.delta[8], params.delta[6], params.delta[7]))
    point = TransformationParameters(delta=params.delta, eps=(1, 1, 1, 0), X=X)
    return compose(gauge_transform(gauge), usual_equivalence(point, domain), name="g1-preserving", kind="g1-preserving")


def hodograph_equation_elements(elements: ArbitraryElements) -> ArbitraryElements:
    """Elements of the equation for v~ reached from f u_t = (c u^-2 u_x)_x: f = 1, A = c f(v)."""
    u, x = symbol("u"), symbol("x")
    if elements.B != 0:
        raise TransformationError("the hodograph image is an equation of the class only for B = 0")
    c = sympy.simplify(elements.A * u**2)
    if c.has(u):
        raise TransformationError(f"A = {to_text(elements.A)} is not a multiple of u^(-2)")
    lower, upper = elements.domain.interval("x")
    return ArbitraryElements(
        f=sympy.Integer(1),
        A=c * elements.f.xreplace({x: u}),
        B=sympy.Integer(0),
        domain=Domain(intervals={**elements.domain.intervals, "u": (lower, upper)}),
    )


def hodograph() -> EquivalenceTransformation:
    """t~ = t, x~ = v, u~ = 1/u, v~ = x."""
    t, x, u, v = (symbol(n) for n in ("t", "x", "u", "v"))
    maps = {"t": t, "x": v, "u": 1 / u, "v": x}
    return EquivalenceTransformation(
        name="hodograph",
        kind="hodograph",
        forward=dict(maps),
        backward=dict(maps),
        element_map=hodograph_equation_elements,
    )


def potential_shift(epsilon: float) -> EquivalenceTransformation:
    """t~ = t, x~ = x + eps v, u~ = u/(1 + eps u), v~ = v."""
    eps = as_expr(epsilon)
    t, x, u, v = (symbol(n) for n in ("t", "x", "u", "v"))

    def element_map(el: ArbitraryElements) -> ArbitraryElements:
        if el.f != 1:
            raise TransformationError("the potential shift acts on elements with f = 1 only")
        int_B = el.antiderivative_of("B")
        back = u / (1 - eps * u)
        new_A = (el.A * (1 + eps * u) ** 2).xreplace({u: back})
        new_int_B = sympy.simplify((int_B / (1 + eps * u)).xreplace({u: back}))
        return ArbitraryElements(
            f=sympy.Integer(1),
            A=sympy.simplify(new_A),
            B=sympy.simplify(sympy.diff(new_int_B, u)),
            int_B=new_int_B,
            domain=_mapped_domain(el.domain, {"u": u / (1 + eps * u)}),
        )

    return EquivalenceTransformation(
        name=f"potential-shift({epsilon:g})",
        kind="potential-shift",
        forward={"t": t, "x": x + eps * v, "u": u / (1 + eps * u), "v": v},
        backward={"t": t, "x": x - eps * v, "u": u / (1 - eps * u), "v": v},
        element_map=element_map,
        inverse_element_map=lambda el: potential_shift(-epsilon).apply(el),
    )


def point_transformation(
    forward: Mapping[str, str | sympy.Expr],
    backward: Mapping[str, str | sympy.Expr],
    name: str = "point",
    domain: Domain | None = None,
) -> EquivalenceTransformation:
    """Explicit point map with its inverse; the round trip is checked on *domain*."""
    unknown = (set(forward) | set(backward)) - set(POINT_VARIABLES)
    if unknown:
        raise TransformationError(f"unknown variables in point map: {', '.join(sorted(unknown))}")
    if set(forward) != set(backward):
        raise TransformationError("forward and backward maps must name the same variables")
    transformation = EquivalenceTransformation(
        name=name,
        kind="point",
        forward={k: as_expr(v) for k, v in forward.items()},
        backward={k: as_expr(v) for k, v in backward.items()},
    )
    transformation.check_round_trip(domain)
    return transformation


def compose(
    first: EquivalenceTransformation,
    second: EquivalenceTransformation,
    name: str | None = None,
    kind: str = "composite",
) -> EquivalenceTransformation:
    """Apply *first*, then *second*."""
    names = [v for v in POINT_VARIABLES if v in set(first.variables) | set(second.variables)]
    first_forward = {symbol(v): first.forward_of(v) for v in names}
    second_backward = {symbol(v): second.backward_of(v) for v in names}
    forward = {v: second.forward_of(v).xreplace(first_forward) for v in names}
    backward = {v: first.backward_of(v).xreplace(second_backward) for v in names}

    element_map = inverse_element_map = None
    if first.element_map is not None and second.element_map is not None:
        def element_map(el):
            return second.element_map(first.element_map(el))
    if first.inverse_element_map is not None and second.inverse_element_map is not None:
        def inverse_element_map(el):
            return first.inverse_element_map(second.inverse_element_map(el))

    factor = None
    if first.factor is not None and second.factor is not None:
        def factor(el):
            return first.factor(el) * second.factor(first.apply(el))

    return EquivalenceTransformation(
        name=name or f"{second.name} o {first.name}",
        kind=kind,
        forward=forward,
        backward=backward,
        element_map=element_map,
        inverse_element_map=inverse_element_map,
        factor=factor,
    )


def apply_to_elements(transformation: EquivalenceTransformation, elements: ArbitraryElements) -> ArbitraryElements:
    return transformation.apply(elements)


def class_operator(elements: ArbitraryElements) -> sympy.Expr:
    """f u_t - (g A u_x)_x - h B u_x as a jet-space expression."""
    return build_equation(elements, gauged=False).equations[0]


# --- Pushforward of systems and vector fields --- #
def _time_map(transformation: EquivalenceTransformation) -> sympy.Expr:
    t_map = transformation.forward_of("t")
    foreign = {s.name for s in t_map.free_symbols} - {"t"} - set(PARAMETERS)
    if foreign:
        raise TransformationError(
            f"t~ = {to_text(t_map)} depends on {', '.join(sorted(foreign))}; only t~ = T(t) is supported"
        )
    return t_map


def push_forward_system(
    transformation: EquivalenceTransformation,
    system: DifferentialSystem,
    domain: Domain | None = None,
    rng=None,
) -> DifferentialSystem:
    """Image of a first-order potential system, re-resolved as a potential system in (u~, v~[, w~])."""
    primary = system.primary
    potentials = [dep for dep in system.jet_space.dependent if dep != primary]
    if not potentials:
        raise TransformationError(f"{system.name} has no potential; push forward solutions instead")
    space = system.jet_space
    T = _time_map(transformation)
    T_t = sympy.diff(T, symbol("t"))
    X = transformation.forward_of("x")
    D_x_X = system.resolve(total_derivative(X, "x", space))
    D_t_X = system.resolve(total_derivative(X, "t", space))
    if D_x_X == 0:
        raise TransformationError(f"x~ = {to_text(X)} is constant along x on {system.name}")
    u_x = jet_symbol(primary, 0, 1)
    new_u_x = sympy.Dummy("p", real=True)
    U = transformation.forward_of(primary)
    slope = sympy.together(system.resolve(total_derivative(U, "x", space)) / D_x_X)
    if slope.has(jet_symbol(primary, 0, 2)) or slope.has(jet_symbol(primary, 1, 0)):
        raise TransformationError(f"{transformation.name} is not a point map of first order on {system.name}")
    if slope.has(u_x):
        solutions = sympy.solve(sympy.Eq(new_u_x, slope), u_x)
        if len(solutions) != 1:
            raise InversionError(f"cannot express {u_x.name} through the new derivative under {transformation.name}")
        old_u_x = solutions[0]
    else:
        old_u_x = None

    def in_new_variables(expr: sympy.Expr) -> sympy.Expr:
        expr = sympy.sympify(expr)
        if old_u_x is not None:
            expr = expr.xreplace({u_x: old_u_x})
        elif expr.has(u_x):
            raise TransformationError(f"{u_x.name} cannot be recovered after {transformation.name}")
        table = {new_u_x: jet_symbol("u", 0, 1)}
        return sympy.simplify(transformation.to_new(expr, table))

    images = []
    for name in potentials:
        P = transformation.forward_of(name)
        D_x_P = system.resolve(total_derivative(P, "x", space))
        D_t_P = system.resolve(total_derivative(P, "t", space))
        density = D_x_P / D_x_X
        flux = (D_t_P - D_t_X * density) / T_t
        images.append(Potential(name, in_new_variables(density), in_new_variables(flux)))
    LOGGER.debug(f"Pushed {system.name} forward under {transformation.name}")
    return potential_system(f"{transformation.name}({system.name})", images, primary="u", domain=domain, rng=rng)


def _jacobian_check(transformation: EquivalenceTransformation, variables: Sequence[str], domain: Domain | None) -> None:
    names = [v for v in POINT_VARIABLES if v in set(variables) | set(transformation.variables)]
    matrix = sympy.Matrix([
        [sympy.diff(transformation.forward_of(new), symbol(old)) for old in names]
        for new in names
    ])
    determinant = sympy.simplify(matrix.det())
    if determinant == 0 or is_zero(determinant, domain, trials=20, rng=0):
        raise TransformationError(f"Jacobian of {transformation.name} is singular")


def push_forward_vectorfield(
    transformation: EquivalenceTransformation,
    field_: VectorField,
    domain: Domain | None = None,
) -> VectorField:
    """Change of variables: the new coefficient of y~ is V(y~(old)) written in the new variables."""
    variables = sorted(field_.variables() & set(POINT_VARIABLES))
    _jacobian_check(transformation, variables, domain)
    names = [v for v in POINT_VARIABLES if v in set(variables) | set(transformation.variables)]
    coefficients = {}
    for var in POINT_VARIABLES:
        if var not in names:
            coefficients[var] = transformation.to_new(field_.coefficient(var))
            continue
        coefficients[var] = sympy.simplify(transformation.to_new(field_(transformation.forward_of(var))))
    return VectorField(
        tau=coefficients["t"], xi=coefficients["x"], eta=coefficients["u"],
        theta=coefficients["v"], zeta=coefficients["w"], label=field_.label,
    )


# --- Solutions --- #
@dataclass(frozen=True)
class SolutionCheck:
    verdict: str  # pass | fail | inconclusive
    worst: float
    worst_abs: float
    fd_worst: float
    witness: dict[str, float]
    points: int
    singular: int

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"


def _fd_values(expr: sympy.Expr, points: Mapping[str, np.ndarray], size: int, nt: int, nx: int, step: float) -> np.ndarray:
    """Central differences of *expr* at the sample points."""
    if nt == 0 and nx == 0:
        return evaluate_array(expr, points, size)
    variable, order = ("x", nx) if nx else ("t", nt)
    reduced = (nt, nx - (2 if order >= 2 else 1)) if nx else (nt - (2 if order >= 2 else 1), nx)

    def shifted(delta: float) -> dict[str, np.ndarray]:
        moved = dict(points)
        moved[variable] = points[variable] + delta
        return moved

    if order >= 2:
        return (
            _fd_values(expr, shifted(step), size, *reduced, step)
            - 2 * _fd_values(expr, points, size, *reduced, step)
            + _fd_values(expr, shifted(-step), size, *reduced, step)
        ) / step**2
    return (
        _fd_values(expr, shifted(step), size, *reduced, step)
        - _fd_values(expr, shifted(-step), size, *reduced, step)
    ) / (2 * step)


@dataclass(frozen=True)
class Solution:
    """u(t, x) with optional potentials, valid on *domain*."""

    u: sympy.Expr
    potentials: Mapping[str, sympy.Expr] = field(default_factory=dict)
    domain: Domain = field(default_factory=Domain)
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "u", as_expr(self.u))
        object.__setattr__(self, "potentials", {k: as_expr(v) for k, v in self.potentials.items()})

    @classmethod
    def from_entry(cls, entry) -> "Solution":
        potentials = {"v": entry.potential} if entry.potential is not None else {}
        return cls(u=entry.u, potentials=potentials, domain=entry.domain, label=entry.id)

    def value_of(self, dependent: str, system: DifferentialSystem) -> sympy.Expr:
        if dependent == system.primary:
            return self.u
        if dependent not in self.potentials:
            raise TransformationError(f"solution {self.label or to_text(self.u)} has no value for {dependent}")
        return self.potentials[dependent]

    def jet_table(self, system: DifferentialSystem) -> dict[sympy.Symbol, sympy.Expr]:
        t, x = symbol("t"), symbol("x")
        table = {}
        for equation in system.equations:
            for sym in equation.free_symbols:
                parts = split_jet(sym.name)
                if parts is None or sym in table:
                    continue
                dependent, nt, nx = parts
                value = self.value_of(dependent, system)
                if nt:
                    value = sympy.diff(value, t, nt)
                if nx:
                    value = sympy.diff(value, x, nx)
                table[sym] = value
        return table

    def base_names(self, system: DifferentialSystem) -> set[str]:
        """t, x and every non-jet name of the solution and the system."""
        names = {"t", "x"}
        for expr in (self.u, *self.potentials.values(), *system.equations):
            names.update(s.name for s in expr.free_symbols if split_jet(s.name) is None)
        return names

    def residuals(self, system: DifferentialSystem) -> list[sympy.Expr]:
        table = self.jet_table(system)
        return [equation.xreplace(table) for equation in system.equations]

    def check(
        self,
        system: DifferentialSystem,
        trials: int | None = None,
        seed: int | None = None,
        step: float = 1e-3,
    ) -> SolutionCheck:
        """Symbolic residual verdict, cross-checked by central finite differences."""
        settings = config.load_settings().verification
        trials = settings.trials if trials is None else trials
        residuals = self.residuals(system)
        try:
            sampled = sample_residuals(
                residuals, self.domain, trials, make_rng(seed),
                parameter_samples=settings.parameter_samples, extra_names=self.base_names(system),
            )
        except InconclusiveError:
            LOGGER.warning(f"All sample points singular for solution {self.label}")
            return SolutionCheck("inconclusive", float("nan"), float("nan"), float("nan"), {}, 0, trials)
        ratios = np.where(sampled.valid, np.abs(sampled.values) / (1.0 + sampled.scales), -np.inf).max(axis=0)
        column = int(np.argmax(ratios))
        worst = float(ratios[column])
        if worst <= settings.solution_pass:
            verdict = "pass"
        elif worst > settings.symmetry_fail:
            verdict = "fail"
        else:
            verdict = "inconclusive"
        fd_worst = self._fd_residual(system, sampled.points, sampled.valid, step)
        if np.isfinite(fd_worst) and (fd_worst > 1e-4) == (verdict == "pass"):
            LOGGER.warning(
                f"Finite differences disagree for {self.label}: symbolic {worst:.3g}, finite-difference {fd_worst:.3g}"
            )
        return SolutionCheck(
            verdict=verdict,
            worst=worst,
            worst_abs=float(np.abs(sampled.values[:, column]).max()),
            fd_worst=fd_worst,
            witness=sampled.witness(column),
            points=int(sampled.valid.sum()),
            singular=int((~sampled.valid).sum()),
        )

    def _fd_residual(self, system, points, valid, step) -> float:
        size = valid.size
        worst = 0.0
        for equation in system.equations:
            values = dict(points)
            for sym in equation.free_symbols:
                parts = split_jet(sym.name)
                if parts is None:
                    continue
                dependent, nt, nx = parts
                values[sym.name] = _fd_values(self.value_of(dependent, system), points, size, nt, nx, step)
            residual = evaluate_array(equation, values, size)
            scale = evaluate_array(magnitude(equation), values, size)
            ratio = np.abs(residual) / (1.0 + np.abs(scale))
            ratio = ratio[valid & np.isfinite(ratio)]
            if ratio.size:
                worst = max(worst, float(ratio.max()))
        return worst


def _image_domain(domain: Domain, maps: Mapping[str, sympy.Expr], rng) -> Domain:
    """Bounding box (central 90%) of the images of sampled points."""
    names = sorted({s.name for expr in maps.values() for s in expr.free_symbols})
    points = domain.sample(names, 200, make_rng(rng), parameter_samples=1)
    intervals = dict(domain.intervals)
    for variable, expr in maps.items():
        image = evaluate_array(expr, points, 200)
        image = image[np.isfinite(image)]
        if image.size < 10:
            raise TransformationError(f"image of the domain under {variable}~ = {to_text(expr)} is empty")
        lower, upper = np.percentile(image, [5, 95])
        if upper > lower:
            intervals[variable] = (float(lower), float(upper))
    parameters = {k: v for k, v in domain.intervals.items() if k in PARAMETERS}
    intervals.update(parameters)
    return Domain(intervals=intervals, exclusions=domain.exclusions, choices=domain.choices)


def push_forward_solution(
    transformation: EquivalenceTransformation,
    solution: Solution,
    system: DifferentialSystem | None = None,
    rng=None,
) -> Solution:
    """Image of a solution; (t~, x~) are inverted in closed form to write it as u~(t~, x~)."""
    if system is not None:
        before = solution.check(system, trials=50, seed=rng)
        if not before.passed:
            raise TransformationError(
                f"{solution.label or 'solution'} does not solve {system.name} (residual {before.worst:.3g})"
            )
    t, x = symbol("t"), symbol("x")
    values = {symbol("u"): solution.u}
    values.update({symbol(name): expr for name, expr in solution.potentials.items()})
    images = {var: transformation.forward_of(var).xreplace(values) for var in POINT_VARIABLES}
    images = {var: images[var] for var in ("t", "x", "u", *solution.potentials)}
    for expr in images.values():
        missing = sorted({s.name for s in expr.free_symbols if s.name in ("u", "v", "w")})
        if missing:
            raise TransformationError(f"solution has no value for {', '.join(missing)}")
    new_domain = _image_domain(solution.domain, {"t": images["t"], "x": images["x"]}, rng)
    t_of = t if images["t"] == t else invert_map(images["t"], "t", solution.domain)
    x_image = images["x"].xreplace({t: t_of})
    x_of = x if x_image == x else invert_map(x_image, "x", new_domain.merged(Domain(intervals={"x": solution.domain.interval("x")})))
    to_new = {t: t_of, x: x_of}
    result = Solution(
        u=sympy.simplify(images["u"].xreplace(to_new)),
        potentials={
            name: sympy.simplify(images[name].xreplace(to_new))
            for name in solution.potentials
        },
        domain=new_domain,
        label=f"{transformation.name}({solution.label})" if solution.label else transformation.name,
    )
    if system is not None:
        image_system = push_forward_system(transformation, system)
        after = result.check(image_system, trials=50, seed=rng)
        if not after.passed:
            raise TransformationError(
                f"image of {solution.label or 'solution'} fails {image_system.name} (residual {after.worst:.3g})"
            )
    return result


# --- Transform spec files --- #
class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ParametersSpec(_Strict):
    delta: list[float] = Field(default_factory=lambda: list(IDENTITY_DELTA), min_length=9, max_length=9)
    eps: list[float] = Field(default_factory=lambda: list(IDENTITY_EPS), min_length=4, max_length=4)
    X: str = "x"
    epsilon: float = 0.0


class SolutionTarget(_Strict):
    u: str
    potential: str | None = None
    domain: DomainSpec = Field(default_factory=DomainSpec)


class TargetSpec(_Strict):
    elements: ElementsSpec | None = None
    equation: str | None = None
    system: str | None = None
    algebra: str | None = None
    # catalog solution id or an explicit solution; checked against `system` when given
    solution: str | SolutionTarget | None = None


class TransformSpec(_Strict):
    kind: Literal["usual", "extended", "gauge", "g1-preserving", "hodograph", "potential-shift", "point"]
    name: str | None = None
    parameters: ParametersSpec = Field(default_factory=ParametersSpec)
    forward: dict[str, str] | None = None
    backward: dict[str, str] | None = None
    target: TargetSpec = Field(default_factory=TargetSpec)

    @field_validator("forward", "backward")
    @classmethod
    def _point_variables(cls, value):
        if value is not None:
            unknown = set(value) - set(POINT_VARIABLES)
            if unknown:
                raise ValueError(f"unknown variables {sorted(unknown)}")
        return value


def load_transform_spec(text: str) -> TransformSpec:
    try:
        return TransformSpec.model_validate_json(text)
    except ValidationError as exc:
        raise schema_error(exc) from exc


def _target_elements(spec: TransformSpec, catalog: Catalog) -> ArbitraryElements | None:
    target = spec.target
    if target.elements is not None:
        return ArbitraryElements.from_spec(target.elements)
    if target.equation is not None:
        return ArbitraryElements.from_spec(catalog.equation(target.equation).elements)
    if target.algebra is not None:
        return catalog.algebra(target.algebra).elements
    if target.system is not None:
        return catalog.case_elements(target.system)
    return None


def build_transformation(spec: TransformSpec, elements: ArbitraryElements | None = None) -> EquivalenceTransformation:
    p = spec.parameters
    params = TransformationParameters(delta=tuple(p.delta), eps=tuple(p.eps), X=parse(p.X), epsilon=p.epsilon)
    domain = elements.domain if elements is not None else None
    if spec.kind == "usual":
        return usual_equivalence(params, domain)
    if spec.kind == "extended":
        return extended_equivalence(params, domain)
    if spec.kind == "gauge":
        return gauge_transform(params)
    if spec.kind == "g1-preserving":
        if elements is None:
            raise TransformationError("g1-preserving transformations need target elements")
        return g1_preserving(params, elements, domain)
    if spec.kind == "hodograph":
        return hodograph()
    if spec.kind == "potential-shift":
        return potential_shift(p.epsilon)
    if not spec.forward or not spec.backward:
        raise TransformationError("point transformations need forward and backward maps")
    return point_transformation(spec.forward, spec.backward, spec.name or "point", domain)


def run_transform_spec(spec: TransformSpec, catalog: Catalog | None = None) -> dict[str, object]:
    """Apply a transform spec to its target; the result holds grammar strings only."""
    catalog = catalog or load_catalog()
    elements = _target_elements(spec, catalog)
    transformation = build_transformation(spec, elements)
    output: dict[str, object] = {"transformation": {"name": transformation.name, **transformation.describe()}}
    target = spec.target

    if elements is not None and transformation.element_map is not None and target.algebra is None:
        mapped = transformation.apply(elements)
        output["elements"] = mapped.to_spec().model_dump(exclude_none=True)
        output["equation"] = [f"{to_text(eq)} = 0" for eq in build_equation(mapped, gauged=False).equations]

    system = None
    if target.algebra is not None:
        entry = catalog.algebra(target.algebra)
        system = entry.system()
        domain = entry.domain
        generators = []
        for generator in entry.generators:
            for suffix, vector in generator.instances():
                image = push_forward_vectorfield(transformation, vector, domain)
                generators.append({"label": " ".join(filter(None, [generator.label, suffix])), "image": image.to_text()})
        output["generators"] = generators
    elif target.system is not None:
        system = catalog.build_potential_system(target.system, elements)
    if system is not None and system.jet_space.dependent != (system.primary,):
        image = push_forward_system(transformation, system)
        output["system"] = image.to_text()

    if target.solution is not None:
        if isinstance(target.solution, str):
            entry = next((s for s in catalog.solutions(target.equation or "fujita-storm") if s.id == target.solution), None)
            if entry is None:
                raise UnknownCatalogIdError(f"unknown solution {target.solution!r}")
            solution = Solution.from_entry(entry)
        else:
            solution = Solution(
                u=parse(target.solution.u),
                potentials={"v": parse(target.solution.potential)} if target.solution.potential else {},
                domain=build_domain(target.solution.domain),
            )
        if system is None and solution.potentials:
            equation = catalog.equation(target.equation or "fujita-storm")
            system = catalog.build_potential_system("system-1", ArbitraryElements.from_spec(equation.elements))
        image = push_forward_solution(transformation, solution, system)
        output["solution"] = {
            "u": to_text(image.u),
            **{name: to_text(expr) for name, expr in image.potentials.items()},
        }
    LOGGER.info(f"Applied {transformation.name} to {', '.join(k for k in output if k != 'transformation') or 'nothing'}")
    return output
