"""Expression layer for symkit-dc.

Expressions are sympy trees built only from the symbol registry below, so
every symbol is real and a name always maps to the same object. On top of
sympy this module provides the expression grammar (parser and printer), the
formal antiderivatives ``intA``/``intB``, numeric evaluation and the
probabilistic zero test that the rest of the engine uses as its identity
oracle.
"""

from __future__ import annotations

import io
import logging
import re
import tokenize
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Mapping, Sequence

import numpy as np
import sympy
from sympy.core.function import AppliedUndef, ArgumentIndexError
from sympy.parsing.sympy_parser import (
    convert_xor,
    parse_expr,
    rationalize,
    standard_transformations,
)
from sympy.printing.str import StrPrinter

from . import config
from .errors import (
    BindingError,
    DomainEvaluationError,
    ExpressionSyntaxError,
    InconclusiveError,
    NonElementaryIntegralError,
    UnknownSymbolError,
)

LOGGER = logging.getLogger(__name__)

INDEPENDENT = ("t", "x")
DEPENDENT = ("u", "v", "w")
VARIABLES = ("t", "x", "u", "v", "w", "z")
PARAMETERS = ("mu", "nu", "eps", "delta", "c", "c1", "c2", "k")
MAX_JET_ORDER = 4

# element profile -> canonical argument
ELEMENT_ARGUMENTS = {
    "f": "x", "g": "x", "h": "x",
    "A": "u", "B": "u",
    "intA": "u", "intB": "u",
}

_JET_NAME = re.compile(r"^([uvw])_([xt]+)$")
_JET_LIKE = re.compile(r"^[uvw]_")

Bindings = Mapping[str, "sympy.Expr | float | int | str"]


# --- Symbol registry --- #
@lru_cache(maxsize=None)
def symbol(name: str) -> sympy.Symbol:
    """The registry symbol for *name* (variables, parameters, jet coordinates)."""
    return sympy.Symbol(name, real=True)


def jet_name(dependent: str, nt: int = 0, nx: int = 0) -> str:
    if nt == 0 and nx == 0:
        return dependent
    return f"{dependent}_{'x' * nx}{'t' * nt}"


def jet_symbol(dependent: str, nt: int = 0, nx: int = 0) -> sympy.Symbol:
    return symbol(jet_name(dependent, nt, nx))


def split_jet(name: str) -> tuple[str, int, int] | None:
    """(dependent, nt, nx) for a dependent variable or jet coordinate name."""
    if name in DEPENDENT:
        return name, 0, 0
    match = _JET_NAME.match(name)
    if not match:
        return None
    letters = match.group(2)
    return match.group(1), letters.count("t"), letters.count("x")


def canonical_jet_name(name: str) -> str | None:
    parts = split_jet(name)
    if parts is None or parts[1] + parts[2] > MAX_JET_ORDER:
        return None
    return jet_name(*parts)


# --- Element profiles and formal antiderivatives --- #
@lru_cache(maxsize=None)
def element_function(name: str) -> sympy.FunctionClass:
    """Undefined function standing for an arbitrary element (f, g, h, A, B)."""
    return sympy.Function(name, real=True)


class FormalAntiderivative(sympy.Function):
    """Antiderivative of a named profile with respect to u; d/du intA(u) = A(u)."""

    nargs = 1
    profile = ""

    def fdiff(self, argindex=1):
        return element_function(self.profile)(self.args[0])


class intA(FormalAntiderivative):  # noqa: N801 - printed name in the grammar
    profile = "A"


class intB(FormalAntiderivative):  # noqa: N801
    profile = "B"


# --- Grammar --- #
_FUNCTIONS = {
    "exp": sympy.exp,
    "ln": sympy.log,
    "log": sympy.log,
    "abs": sympy.Abs,
    "arctan": sympy.atan,
    "sin": sympy.sin,
    "cos": sympy.cos,
    "sinh": sympy.sinh,
    "cosh": sympy.cosh,
    "sqrt": sympy.sqrt,
    "sign": sympy.sign,
    "diff": sympy.diff,
}
_CONSTANTS = {"pi": sympy.pi}
_GLOBALS = {
    "Integer": sympy.Integer,
    "Float": sympy.Float,
    "Rational": sympy.Rational,
    "Symbol": sympy.Symbol,
    "Function": sympy.Function,
}
_TRANSFORMATIONS = standard_transformations + (convert_xor, rationalize)


def _base_namespace() -> dict[str, object]:
    namespace: dict[str, object] = {}
    namespace.update(_FUNCTIONS)
    namespace.update(_CONSTANTS)
    for name in VARIABLES + PARAMETERS:
        namespace[name] = symbol(name)
    for name in ("f", "g", "h", "A", "B"):
        namespace[name] = element_function(name)
    namespace["intA"] = intA
    namespace["intB"] = intB
    return namespace


def _scan_names(text: str) -> Iterable[tuple[str, int]]:
    try:
        for token in tokenize.generate_tokens(io.StringIO(text).readline):
            if token.type == tokenize.NAME:
                yield token.string, token.start[1]
            elif token.type == tokenize.ERRORTOKEN and not token.string.isspace():
                raise ExpressionSyntaxError(f"unexpected character {token.string!r}", token.start[1])
    except tokenize.TokenError as exc:
        raise ExpressionSyntaxError(f"unbalanced brackets in {text!r}", len(text)) from exc


def parse(text: str, extra: Mapping[str, object] | None = None) -> sympy.Expr:
    """Parse grammar text into an expression.

    *extra* declares additional names (placeholders of functional parameters,
    renamed profiles); it takes precedence over the built-in names.
    """
    if not isinstance(text, str) or not text.strip():
        raise ExpressionSyntaxError("empty expression", 0)
    namespace = _base_namespace()
    if extra:
        namespace.update(extra)
    for name, position in _scan_names(text):
        if name in namespace:
            continue
        canonical = canonical_jet_name(name)
        if canonical is not None:
            namespace[name] = symbol(canonical)
        elif _JET_LIKE.match(name) or name.endswith("_"):
            raise ExpressionSyntaxError(f"malformed jet coordinate {name!r}", position)
        else:
            raise UnknownSymbolError(f"unknown identifier {name!r}", position)
    try:
        expr = parse_expr(
            text,
            local_dict=namespace,
            global_dict=dict(_GLOBALS),
            transformations=_TRANSFORMATIONS,
        )
    except SyntaxError as exc:
        position = exc.offset - 1 if exc.offset else None
        raise ExpressionSyntaxError(f"invalid expression {text!r}", position) from exc
    except (TypeError, ValueError, AttributeError, tokenize.TokenError) as exc:
        raise ExpressionSyntaxError(f"invalid expression {text!r}: {exc}") from exc
    return sympy.sympify(expr)


class GrammarPrinter(StrPrinter):
    """Prints expressions back in the input grammar (``^`` powers, ``ln``, ``abs``)."""

    _renamed = {"log": "ln", "atan": "arctan", "Abs": "abs"}

    def _print_Pow(self, expr, rational=False):
        return super()._print_Pow(expr, rational).replace("**", "^")

    def _print_Function(self, expr):
        name = self._renamed.get(expr.func.__name__, expr.func.__name__)
        return f"{name}({self.stringify(expr.args, ', ')})"

    def _print_Exp1(self, expr):
        return "exp(1)"

    def _print_Derivative(self, expr):
        variables = [self._print(var) for var, count in expr.variable_count for _ in range(count)]
        return f"diff({self._print(expr.expr)}, {', '.join(variables)})"


_PRINTER = GrammarPrinter()


def to_text(expr: sympy.Expr) -> str:
    return _PRINTER.doprint(sympy.sympify(expr))


def as_expr(value: "sympy.Expr | float | int | str") -> sympy.Expr:
    if isinstance(value, str):
        return parse(value)
    if isinstance(value, float):
        return sympy.nsimplify(value, rational=True)
    return sympy.sympify(value)


# --- Differentiation and substitution --- #
def _declared_symbol(s: "sympy.Symbol | str") -> sympy.Symbol:
    name = s if isinstance(s, str) else s.name
    if name in VARIABLES or name in PARAMETERS:
        return symbol(name)
    canonical = canonical_jet_name(name)
    if canonical is None:
        raise UnknownSymbolError(f"{name!r} is not a declared variable, parameter or jet coordinate")
    return symbol(canonical)


def differentiate(expr: sympy.Expr, s: "sympy.Symbol | str") -> sympy.Expr:
    """Partial derivative; jet coordinates are independent symbols."""
    return sympy.diff(expr, _declared_symbol(s))


def substitute_elements(expr: sympy.Expr, profiles: Mapping[str, sympy.Expr]) -> sympy.Expr:
    """Replace applied profiles (``A(u)``, ``intB(u)``, ``f(x)``...) by closed forms.

    Each closed form is written in the profile's canonical argument; derivative
    nodes left behind are evaluated.
    """
    if not profiles:
        return expr

    def _matches(node):
        return isinstance(node, (AppliedUndef, FormalAntiderivative)) and node.func.__name__ in profiles

    def _replacement(node):
        name = node.func.__name__
        argument = symbol(ELEMENT_ARGUMENTS.get(name, "u"))
        return profiles[name].xreplace({argument: node.args[0]})

    result = expr.replace(_matches, _replacement)
    if result.has(sympy.Derivative):
        result = result.doit()
    return result


def substitute(expr: sympy.Expr, bindings: Bindings) -> sympy.Expr:
    """Simultaneous single-pass substitution.

    Keys name symbols (variables, parameters, jet coordinates) or element
    profiles; profile values are written in the profile's canonical argument.
    """
    symbols_map: dict[sympy.Symbol, sympy.Expr] = {}
    profiles: dict[str, sympy.Expr] = {}
    for key, value in bindings.items():
        name = key if isinstance(key, str) else str(key)
        if name in ELEMENT_ARGUMENTS:
            profiles[name] = as_expr(value)
            continue
        try:
            target = _declared_symbol(name)
        except UnknownSymbolError as exc:
            raise BindingError(f"cannot bind undeclared name {name!r}") from exc
        if target in symbols_map:
            raise BindingError(f"{name!r} bound twice")
        symbols_map[target] = as_expr(value)
    result = expr.xreplace(symbols_map) if symbols_map else expr
    return substitute_elements(result, profiles)


def simplify_basic(expr: sympy.Expr) -> sympy.Expr:
    """Merge powers of equal bases and products of exponentials; nothing more."""
    return sympy.powsimp(expr, deep=True, combine="exp")


_ELEMENTARY = (
    sympy.exp, sympy.log, sympy.Abs, sympy.sign, sympy.sin, sympy.cos,
    sympy.atan, sympy.sinh, sympy.cosh,
)


def antiderivative(expr: sympy.Expr, variable: str = "x") -> sympy.Expr:
    """Closed-form antiderivative, or NonElementaryIntegralError."""
    var = symbol(variable)
    result = sympy.integrate(expr, var, conds="none")
    foreign = [
        fn for fn in result.atoms(sympy.Function)
        if not isinstance(fn, _ELEMENTARY)
    ]
    if result.has(sympy.Integral) or foreign:
        raise NonElementaryIntegralError(
            f"no elementary antiderivative of {to_text(expr)} with respect to {variable}"
        )
    return result


GAUSS_NODES, GAUSS_WEIGHTS = np.polynomial.legendre.leggauss(48)


class QuadratureAntiderivative(sympy.Function):
    """int_base^arg integrand ds with parameters as trailing arguments; numeric only.

    Subclasses are made by :func:`quadrature_antiderivative`; the derivative in
    the first argument is the integrand itself, so the node survives prolongation.
    """

    is_real = True
    integrand: sympy.Expr = sympy.Integer(0)
    variable = "u"
    parameters: tuple[str, ...] = ()
    base = 1.0

    def fdiff(self, argindex=1):
        if argindex != 1:
            raise ArgumentIndexError(self, argindex)
        table = {symbol(self.variable): self.args[0]}
        table.update({symbol(name): value for name, value in zip(self.parameters, self.args[1:])})
        return self.integrand.xreplace(table)


def quadrature_antiderivative(
    integrand: sympy.Expr,
    variable: str = "u",
    base: float = 1.0,
    name: str = "quad",
) -> sympy.Expr:
    """Antiderivative of *integrand* vanishing at *base*, evaluated by Gauss-Legendre quadrature."""
    var = symbol(variable)
    parameters = tuple(sorted(s.name for s in integrand.free_symbols if s.name != variable))
    foreign = [p for p in parameters if p not in PARAMETERS]
    if foreign:
        raise NonElementaryIntegralError(
            f"cannot integrate {to_text(integrand)} in {variable}: depends on {', '.join(foreign)}"
        )
    compiled = sympy.lambdify([var, *[symbol(p) for p in parameters]], integrand, modules="numpy")

    def evaluate(upper, *values):
        upper, *values = np.broadcast_arrays(
            np.asarray(upper, dtype=float), *[np.asarray(v, dtype=float) for v in values]
        )
        nodes = base + (upper[..., None] - base) * (GAUSS_NODES + 1.0) / 2.0
        with np.errstate(all="ignore"):
            samples = compiled(nodes, *[v[..., None] for v in values])
        samples = np.broadcast_to(np.asarray(samples, dtype=float), nodes.shape)
        return (upper - base) / 2.0 * np.sum(GAUSS_WEIGHTS * samples, axis=-1)

    node = type(name, (QuadratureAntiderivative,), {
        "integrand": integrand,
        "variable": variable,
        "parameters": parameters,
        "base": float(base),
        "_imp_": staticmethod(evaluate),
    })
    LOGGER.debug(f"Quadrature antiderivative {name} of {to_text(integrand)} from {variable} = {base:g}")
    return node(var, *[symbol(p) for p in parameters])


# --- Numeric evaluation --- #
def unresolved_nodes(expr: sympy.Expr) -> list[sympy.Expr]:
    nodes = list(expr.atoms(FormalAntiderivative)) + list(expr.atoms(AppliedUndef))
    nodes += list(expr.atoms(sympy.Derivative))
    return nodes


@lru_cache(maxsize=8192)
def _compile(expr: sympy.Expr, names: tuple[str, ...]):
    return sympy.lambdify([symbol(n) for n in names], expr, modules="numpy")


def _symbol_names(exprs: Iterable[sympy.Expr]) -> tuple[str, ...]:
    names: set[str] = set()
    for expr in exprs:
        names.update(s.name for s in expr.free_symbols)
    return tuple(sorted(names))


def evaluate_array(expr: sympy.Expr, values: Mapping[str, np.ndarray], size: int) -> np.ndarray:
    """Vectorised evaluation; non-finite entries mark points outside the domain."""
    nodes = unresolved_nodes(expr)
    if nodes:
        raise DomainEvaluationError(f"unresolved node {to_text(nodes[0])} in numeric evaluation")
    names = _symbol_names([expr])
    missing = [n for n in names if n not in values]
    if missing:
        raise BindingError(f"no value bound for {', '.join(missing)}")
    func = _compile(expr, names)
    with np.errstate(all="ignore"):
        try:
            result = func(*[np.asarray(values[n], dtype=float) for n in names])
        except (ZeroDivisionError, ValueError, OverflowError):
            return np.full(size, np.nan)
    result = np.asarray(result, dtype=complex if np.iscomplexobj(result) else float)
    if np.iscomplexobj(result):
        result = np.where(np.abs(result.imag) > 0, np.nan, result.real)
    return np.broadcast_to(result, (size,)).astype(float)


def eval_numeric(expr: sympy.Expr, bindings: Bindings) -> float:
    """IEEE double value of *expr* at the bound point."""
    values = {}
    for key, value in bindings.items():
        name = key if isinstance(key, str) else str(key)
        values[_declared_symbol(name).name] = np.array([float(value)])
    result = evaluate_array(sympy.sympify(expr), values, 1)[0]
    if not np.isfinite(result):
        raise DomainEvaluationError(f"{to_text(expr)} is not finite at {dict(bindings)}")
    return float(result)


def finite_difference(expr: sympy.Expr, name: str, bindings: Bindings, step: float = 1e-5) -> float:
    """Central difference of *expr* in *name* at the bound point."""
    plus = dict(bindings)
    minus = dict(bindings)
    plus[name] = float(bindings[name]) + step
    minus[name] = float(bindings[name]) - step
    return (eval_numeric(expr, plus) - eval_numeric(expr, minus)) / (2 * step)


# --- Domains and sampling --- #
@dataclass(frozen=True)
class Domain:
    """Sampling region: intervals per name, excluded points, discrete choices and
    positivity conditions (each expression must be > 0)."""

    intervals: Mapping[str, tuple[float, float]] = field(default_factory=dict)
    exclusions: Mapping[str, tuple[float, ...]] = field(default_factory=dict)
    choices: Mapping[str, tuple[float, ...]] = field(default_factory=dict)
    conditions: tuple[sympy.Expr, ...] = ()

    def __post_init__(self):
        for name, (lower, upper) in self.intervals.items():
            if not lower < upper:
                raise ValueError(f"empty interval for {name}: ({lower}, {upper})")

    def interval(self, name: str) -> tuple[float, float]:
        if name in self.intervals:
            return tuple(self.intervals[name])
        sampling = config.load_settings().sampling
        if name in sampling:
            return tuple(sampling[name])
        if name in PARAMETERS:
            return tuple(sampling.get("parameter", (0.5, 2.0)))
        if split_jet(name) is not None:
            return tuple(sampling.get("jet", (-1.0, 1.0)))
        raise DomainEvaluationError(f"no sampling interval for {name!r}")

    def merged(self, other: "Domain | None") -> "Domain":
        """Entries of *other* win."""
        if other is None:
            return self
        return Domain(
            intervals={**self.intervals, **other.intervals},
            exclusions={**self.exclusions, **other.exclusions},
            choices={**self.choices, **other.choices},
            conditions=self.conditions + other.conditions,
        )

    def _draw(self, name: str, size: int, rng: np.random.Generator) -> np.ndarray:
        if name in self.choices:
            return rng.choice(np.asarray(self.choices[name], dtype=float), size=size)
        lower, upper = self.interval(name)
        values = rng.uniform(lower, upper, size=size)
        excluded = self.exclusions.get(name, ())
        if excluded:
            margin = 0.02 * (upper - lower)
            for _ in range(100):
                bad = np.zeros(size, dtype=bool)
                for point in excluded:
                    bad |= np.abs(values - point) < margin
                if not bad.any():
                    break
                values[bad] = rng.uniform(lower, upper, size=int(bad.sum()))
        return values

    def sample(
        self,
        names: Sequence[str],
        trials: int,
        rng: np.random.Generator,
        parameter_samples: int = 5,
    ) -> dict[str, np.ndarray]:
        """Draw points; parameters are constant inside each of the blocks."""
        parameters = [n for n in names if n in PARAMETERS]
        variables = [n for n in names if n not in PARAMETERS]
        blocks = parameter_samples if parameters else 1
        columns: dict[str, list[np.ndarray]] = {n: [] for n in names}
        for _ in range(blocks):
            block = {n: np.full(trials, self._draw(n, 1, rng)[0]) for n in parameters}
            block.update({n: self._draw(n, trials, rng) for n in variables})
            block = self._enforce_conditions(block, variables, trials, rng)
            for n in names:
                columns[n].append(block[n])
        return {n: np.concatenate(parts) if parts else np.empty(0) for n, parts in columns.items()}

    def _enforce_conditions(self, block, variables, trials, rng):
        if not self.conditions:
            return block
        for _ in range(50):
            bad = np.zeros(trials, dtype=bool)
            for condition in self.conditions:
                needed = {n: block.get(n) for n in _symbol_names([condition])}
                for n in needed:
                    if n not in block:
                        block[n] = self._draw(n, trials, rng)
                values = evaluate_array(condition, block, trials)
                bad |= ~(np.isfinite(values) & (values > 0))
            if not bad.any():
                return block
            for n in variables:
                block[n] = block[n].copy()
                block[n][bad] = self._draw(n, int(bad.sum()), rng)
        return block


def magnitude(expr: sympy.Expr) -> sympy.Expr:
    """Sum of term magnitudes: sums and products are taken termwise in absolute value."""
    if expr.is_Add:
        return sympy.Add(*[magnitude(arg) for arg in expr.args])
    if expr.is_Mul:
        return sympy.Mul(*[magnitude(arg) for arg in expr.args])
    if expr.is_Pow and expr.exp.is_Integer and expr.exp > 0:
        return magnitude(expr.base) ** expr.exp
    return sympy.Abs(expr)


def make_rng(seed: "int | np.random.Generator | None") -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None:
        seed = config.load_settings().verification.seed
    return np.random.default_rng(seed)


@dataclass(frozen=True)
class SampledResiduals:
    """Values and magnitudes of several expressions on shared sample points."""

    points: dict[str, np.ndarray]
    values: np.ndarray  # (expressions, points)
    scales: np.ndarray
    valid: np.ndarray   # points where everything is finite

    def witness(self, column: int) -> dict[str, float]:
        return {name: float(col[column]) for name, col in sorted(self.points.items())}


def sample_residuals(
    exprs: Sequence[sympy.Expr],
    domain: Domain,
    trials: int,
    rng: np.random.Generator,
    parameter_samples: int | None = None,
    extra_names: Iterable[str] = (),
) -> SampledResiduals:
    """Evaluate *exprs* on shared points; *extra_names* are drawn even when no expression uses them."""
    if trials < 1:
        raise ValueError("trials must be at least 1")
    if parameter_samples is None:
        parameter_samples = config.load_settings().verification.parameter_samples
    exprs = [sympy.sympify(e) for e in exprs]
    scales_exprs = [magnitude(e) for e in exprs]
    names = tuple(sorted(set(_symbol_names(exprs)) | set(extra_names)))
    points = domain.sample(names, trials, rng, parameter_samples)
    size = len(next(iter(points.values()))) if points else trials
    values = np.vstack([evaluate_array(e, points, size) for e in exprs]) if exprs else np.zeros((0, size))
    scales = np.vstack([evaluate_array(e, points, size) for e in scales_exprs]) if exprs else np.zeros((0, size))
    valid = np.all(np.isfinite(values), axis=0) & np.all(np.isfinite(scales), axis=0)
    if not valid.any():
        raise InconclusiveError(f"all {size} sampled points are singular")
    if not valid.all():
        LOGGER.debug("Skipped %d singular sample points of %d", int((~valid).sum()), size)
    return SampledResiduals(points=points, values=values, scales=scales, valid=valid)


@dataclass(frozen=True)
class ZeroCheck:
    """Outcome of :func:`is_zero`; truthy when the expression vanished everywhere."""

    verdict: bool
    residual: float
    scale: float
    witness: dict[str, float]
    points: int
    singular: int

    def __bool__(self) -> bool:
        return self.verdict


def is_zero(
    expr: sympy.Expr,
    domain: Domain | None = None,
    trials: int | None = None,
    rng: "int | np.random.Generator | None" = None,
    rtol: float | None = None,
    atol: float | None = None,
) -> ZeroCheck:
    """Probabilistic identity test: |value| <= atol + rtol * scale at every sample."""
    settings = config.load_settings().verification
    trials = settings.trials if trials is None else trials
    rtol = settings.rtol if rtol is None else rtol
    atol = settings.atol if atol is None else atol
    sampled = sample_residuals([expr], domain or Domain(), trials, make_rng(rng))
    values = np.abs(sampled.values[0])
    scales = sampled.scales[0]
    excess = np.where(sampled.valid, values - (atol + rtol * scales), -np.inf)
    worst = int(np.argmax(excess))
    return ZeroCheck(
        verdict=bool(excess[worst] <= 0),
        residual=float(values[worst]),
        scale=float(scales[worst]),
        witness=sampled.witness(worst),
        points=int(sampled.valid.sum()),
        singular=int((~sampled.valid).sum()),
    )
