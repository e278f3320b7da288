"""Jet spaces, total derivatives, prolongation and the invariance criterion."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np
import sympy

from . import config
from .errors import InconclusiveError, JetOrderError, LiftError, ResolverError
from .symbolic import (
    DEPENDENT,
    INDEPENDENT,
    MAX_JET_ORDER,
    Domain,
    as_expr,
    is_zero,
    jet_symbol,
    make_rng,
    parse,
    sample_residuals,
    split_jet,
    symbol,
    to_text,
)

LOGGER = logging.getLogger(__name__)

BASE_VARIABLES = ("t", "x", "u", "v", "w")
COEFFICIENT_NAMES = {"t": "tau", "x": "xi", "u": "eta", "v": "theta", "w": "zeta"}


# --- Jet spaces --- #
@dataclass(frozen=True)
class JetSpace:
    """Independent variables (t, x) and dependent variables with their orders."""

    orders: tuple[tuple[str, int], ...] = (("u", 2),)

    def __post_init__(self):
        for dependent, order in self.orders:
            if dependent not in DEPENDENT:
                raise JetOrderError(f"{dependent!r} is not a dependent variable")
            if order < 1:
                raise JetOrderError(f"order of {dependent} must be at least 1")

    @classmethod
    def of(cls, **orders: int) -> "JetSpace":
        return cls(tuple(sorted(orders.items(), key=lambda kv: DEPENDENT.index(kv[0]))))

    @property
    def dependent(self) -> tuple[str, ...]:
        return tuple(dep for dep, _ in self.orders)

    def order(self, dependent: str) -> int:
        for dep, order in self.orders:
            if dep == dependent:
                return order
        raise JetOrderError(f"{dependent!r} is not a dependent variable of this jet space")

    def capacity(self, dependent: str) -> int:
        """Highest order reachable by resolver consequences."""
        return min(self.order(dependent) + 2, MAX_JET_ORDER)

    def coordinates(self, dependent: str, order: int | None = None) -> list[sympy.Symbol]:
        top = self.order(dependent) if order is None else order
        return [
            jet_symbol(dependent, nt, n - nt)
            for n in range(1, top + 1)
            for nt in range(n + 1)
        ]

    def base_symbols(self) -> list[sympy.Symbol]:
        return [symbol(n) for n in INDEPENDENT + self.dependent]

    def extended(self, extra: Mapping[str, int]) -> "JetSpace":
        orders = dict(self.orders)
        for dep, order in extra.items():
            orders[dep] = max(orders.get(dep, 0), order)
        return JetSpace.of(**orders)


def total_derivative(expr: sympy.Expr, iv: str, space: JetSpace) -> sympy.Expr:
    """D_t or D_x of *expr* on the jet space."""
    if iv not in INDEPENDENT:
        raise JetOrderError(f"{iv!r} is not an independent variable")
    expr = sympy.sympify(expr)
    result = sympy.diff(expr, symbol(iv))
    for sym in sorted(expr.free_symbols, key=lambda s: s.name):
        parts = split_jet(sym.name)
        if parts is None:
            continue
        dependent, nt, nx = parts
        partial = sympy.diff(expr, sym)
        if partial == 0:
            continue
        nt, nx = (nt + 1, nx) if iv == "t" else (nt, nx + 1)
        if nt + nx > space.capacity(dependent):
            raise JetOrderError(
                f"D_{iv} of {sym.name} exceeds the jet space order for {dependent}"
            )
        result += jet_symbol(dependent, nt, nx) * partial
    return result


# --- Vector fields --- #
@dataclass(frozen=True)
class VectorField:
    """tau d_t + xi d_x + eta d_u + theta d_v + zeta d_w over (t, x, u, v, w)."""

    tau: sympy.Expr = sympy.Integer(0)
    xi: sympy.Expr = sympy.Integer(0)
    eta: sympy.Expr = sympy.Integer(0)
    theta: sympy.Expr = sympy.Integer(0)
    zeta: sympy.Expr = sympy.Integer(0)
    label: str = ""

    def __post_init__(self):
        for name in COEFFICIENT_NAMES.values():
            value = sympy.sympify(getattr(self, name))
            object.__setattr__(self, name, value)
            for sym in value.free_symbols:
                parts = split_jet(sym.name)
                if parts is not None and parts[1] + parts[2] > 0:
                    raise JetOrderError(
                        f"coefficient {name} of a vector field contains derivative coordinate {sym.name}"
                    )

    @classmethod
    def parse(cls, label: str = "", extra: Mapping[str, object] | None = None, **texts: str | None) -> "VectorField":
        """Build from grammar strings keyed tau, xi, eta, theta, zeta."""
        values = {name: parse(text, extra) for name, text in texts.items() if text not in (None, "", "0")}
        return cls(label=label, **values)

    def coefficient(self, variable: str) -> sympy.Expr:
        return getattr(self, COEFFICIENT_NAMES[variable])

    def coefficients(self) -> dict[str, sympy.Expr]:
        return {var: self.coefficient(var) for var in BASE_VARIABLES}

    def __call__(self, expr: sympy.Expr) -> sympy.Expr:
        """Action as a derivation on functions of (t, x, u, v, w)."""
        expr = sympy.sympify(expr)
        return sympy.Add(*[
            coeff * sympy.diff(expr, symbol(var))
            for var, coeff in self.coefficients().items()
            if coeff != 0
        ])

    def __add__(self, other: "VectorField") -> "VectorField":
        return VectorField(**{
            name: getattr(self, name) + getattr(other, name) for name in COEFFICIENT_NAMES.values()
        })

    def scaled(self, factor: "sympy.Expr | float") -> "VectorField":
        factor = as_expr(factor)
        return VectorField(label=self.label, **{
            name: factor * getattr(self, name) for name in COEFFICIENT_NAMES.values()
        })

    def map(self, func) -> "VectorField":
        return VectorField(label=self.label, **{
            name: func(getattr(self, name)) for name in COEFFICIENT_NAMES.values()
        })

    def variables(self) -> set[str]:
        names: set[str] = set()
        for coeff in self.coefficients().values():
            names.update(s.name for s in coeff.free_symbols)
        names.update(var for var, coeff in self.coefficients().items() if coeff != 0)
        return names

    def to_text(self) -> str:
        terms = [
            f"({to_text(coeff)})*d{var}"
            for var, coeff in self.coefficients().items()
            if coeff != 0
        ]
        return " + ".join(terms) if terms else "0"


def commutator(first: VectorField, second: VectorField) -> VectorField:
    """[V, W] with coefficients V(W^a) - W(V^a)."""
    return VectorField(**{
        COEFFICIENT_NAMES[var]: sympy.expand(first(second.coefficient(var)) - second(first.coefficient(var)))
        for var in BASE_VARIABLES
    })


# --- Prolongation --- #
class Prolongation:
    """Lazily computed extended coefficients of a vector field."""

    def __init__(self, field_: VectorField, space: JetSpace):
        self.field = field_
        self.space = space
        self._cache: dict[tuple[str, int, int], sympy.Expr] = {}

    def coefficient(self, dependent: str, nt: int = 0, nx: int = 0) -> sympy.Expr:
        if nt == 0 and nx == 0:
            return self.field.coefficient(dependent)
        key = (dependent, nt, nx)
        if key not in self._cache:
            if nx > 0:
                iv, parent = "x", (nt, nx - 1)
            else:
                iv, parent = "t", (nt - 1, nx)
            base = self.coefficient(dependent, *parent)
            value = (
                total_derivative(base, iv, self.space)
                - jet_symbol(dependent, parent[0] + 1, parent[1]) * total_derivative(self.field.tau, iv, self.space)
                - jet_symbol(dependent, parent[0], parent[1] + 1) * total_derivative(self.field.xi, iv, self.space)
            )
            self._cache[key] = sympy.expand(value)
        return self._cache[key]

    def coefficient_for(self, sym: sympy.Symbol) -> sympy.Expr:
        if sym.name in INDEPENDENT:
            return self.field.coefficient(sym.name)
        parts = split_jet(sym.name)
        if parts is None:
            return sympy.Integer(0)
        return self.coefficient(*parts)

    def apply(self, expr: sympy.Expr) -> sympy.Expr:
        """pr V applied to an expression on the jet space."""
        expr = sympy.sympify(expr)
        terms = []
        for sym in expr.free_symbols:
            coeff = self.coefficient_for(sym)
            if coeff != 0:
                terms.append(coeff * sympy.diff(expr, sym))
        return sympy.Add(*terms)


def prolong(field_: VectorField, space: JetSpace) -> dict[sympy.Symbol, sympy.Expr]:
    """Coefficient table for the base variables and every jet coordinate of *space*."""
    prolongation = Prolongation(field_, space)
    table = {symbol(var): field_.coefficient(var) for var in INDEPENDENT + space.dependent}
    for dependent in space.dependent:
        for coordinate in space.coordinates(dependent):
            table[coordinate] = prolongation.coefficient_for(coordinate)
    return table


# --- Differential systems --- #
@dataclass(frozen=True)
class DifferentialSystem:
    """Equations (expressions equal to zero) with a triangular on-manifold resolver.

    ``primary`` is the dependent variable whose x-derivatives stay free;
    ``characteristic`` is alpha for a simplest potential system v_x = alpha u.
    """

    name: str
    jet_space: JetSpace
    equations: tuple[sympy.Expr, ...]
    resolver: tuple[tuple[sympy.Symbol, sympy.Expr], ...]
    primary: str = "u"
    potential: str | None = None
    characteristic: sympy.Expr | None = None

    @cached_property
    def closed_resolver(self) -> dict[sympy.Symbol, sympy.Expr]:
        closed: dict[sympy.Symbol, sympy.Expr] = {}
        keys = [sym for sym, _ in self.resolver]
        for index, (sym, replacement) in enumerate(self.resolver):
            later = set(keys[index:]) & replacement.free_symbols
            if later:
                raise ResolverError(
                    f"resolver entry for {sym.name} references {sorted(s.name for s in later)} "
                    "which are not resolved before it"
                )
            closed[sym] = replacement.xreplace(closed)
        return closed

    def resolve(self, expr: sympy.Expr) -> sympy.Expr:
        result = sympy.sympify(expr).xreplace(self.closed_resolver)
        for sym in result.free_symbols:
            parts = split_jet(sym.name)
            if parts is None or parts[1] + parts[2] == 0:
                continue
            dependent, nt, _ = parts
            if dependent != self.primary or nt > 0:
                raise ResolverError(f"{sym.name} cannot be eliminated on the manifold of {self.name}")
        return result

    def validation_residuals(self) -> list[sympy.Expr]:
        """Equations after resolution, plus the cross-derivative consistency of each potential."""
        residuals = [self.resolve(eq) for eq in self.equations]
        for dependent in self.jet_space.dependent:
            if dependent == self.primary:
                continue
            p_x = jet_symbol(dependent, 0, 1)
            p_t = jet_symbol(dependent, 1, 0)
            closed = self.closed_resolver
            if p_x in closed and p_t in closed:
                residuals.append(self.resolve(
                    total_derivative(closed[p_x], "t", self.jet_space)
                    - total_derivative(closed[p_t], "x", self.jet_space)
                ))
        return residuals

    def validate(self, domain: Domain | None = None, rng=None, trials: int = 40) -> None:
        """Raise ResolverError unless every validation residual passes is_zero."""
        for residual in self.validation_residuals():
            if residual == 0:
                continue
            check = is_zero(sympy.expand(residual), domain, trials=trials, rng=make_rng(rng))
            if not check:
                raise ResolverError(
                    f"resolver of {self.name} does not satisfy {to_text(residual)} = 0 "
                    f"(residual {check.residual:.3g} at {check.witness})"
                )

    def to_text(self) -> list[str]:
        return [f"{to_text(eq)} = 0" for eq in self.equations]


def evolution_resolver(rhs: sympy.Expr, dependent: str, space: JetSpace) -> tuple[tuple[sympy.Symbol, sympy.Expr], ...]:
    """Resolver of u_t = rhs with its x- and t-consequences."""
    u_t = jet_symbol(dependent, 1, 0)
    u_xt = jet_symbol(dependent, 1, 1)
    u_xxt = jet_symbol(dependent, 1, 2)
    u_tt = jet_symbol(dependent, 2, 0)
    rhs_x = total_derivative(rhs, "x", space)
    rhs_xx = total_derivative(rhs_x, "x", space)
    resolved = {u_t: rhs, u_xt: rhs_x, u_xxt: rhs_xx}
    rhs_t = total_derivative(rhs, "t", space).xreplace(resolved)
    return ((u_t, rhs), (u_xt, rhs_x), (u_xxt, rhs_xx), (u_tt, rhs_t))


@dataclass(frozen=True)
class Potential:
    """p_x = density, p_t = flux; a missing flux is derived from a potential whose density contains p."""

    name: str
    density: sympy.Expr
    flux: sympy.Expr | None = None


def _triangular(
    entries: Sequence[tuple[sympy.Symbol, sympy.Expr]], name: str
) -> tuple[tuple[sympy.Symbol, sympy.Expr], ...]:
    """Reorder resolver entries so each one references only keys resolved before it."""
    pending = list(entries)
    unresolved = {key for key, _ in pending}
    ordered = []
    while pending:
        for index, (key, value) in enumerate(pending):
            if not value.free_symbols & unresolved:
                ordered.append(pending.pop(index))
                unresolved.discard(key)
                break
        else:
            raise ResolverError(
                f"resolver of {name} is cyclic in {sorted(key.name for key, _ in pending)}"
            )
    return tuple(ordered)


def potential_system(
    name: str,
    potentials: Sequence[Potential],
    primary: str = "u",
    domain: Domain | None = None,
    rng=None,
) -> DifferentialSystem:
    """System of conservation-law potentials with the primary equation as a consequence.

    u_t is solved from D_t(density) = D_x(flux) of the first potential whose
    density depends on the primary variable; every other such potential must
    give the same u_t (checked numerically when *domain* is given).
    """
    if not potentials:
        raise ResolverError("a potential system needs at least one potential")
    names = [p.name for p in potentials]
    space = JetSpace.of(**{primary: 2}, **{p: 2 for p in names})
    prime = symbol(primary)
    u_t = jet_symbol(primary, 1, 0)
    equations: list[sympy.Expr] = []
    resolver: dict[sympy.Symbol, sympy.Expr] = {}

    def closed(expr):
        return sympy.sympify(expr).xreplace(resolver)

    for potential in potentials:
        p_x = jet_symbol(potential.name, 0, 1)
        equations.append(p_x - potential.density)
        resolver[p_x] = closed(potential.density)
    for potential in potentials:
        if potential.flux is not None:
            p_t = jet_symbol(potential.name, 1, 0)
            equations.append(p_t - potential.flux)
            resolver[p_t] = closed(potential.flux)
    for potential in potentials:
        if potential.flux is not None:
            continue
        p_t = jet_symbol(potential.name, 1, 0)
        p_sym = symbol(potential.name)
        parent = next(
            (q for q in potentials if q.flux is not None and sympy.diff(q.density, p_sym) != 0),
            None,
        )
        if parent is None:
            raise ResolverError(f"no flux given or derivable for potential {potential.name}")
        balance = (
            total_derivative(parent.density, "t", space)
            - total_derivative(parent.flux, "x", space)
        )
        balance = balance.xreplace({k: v for k, v in resolver.items() if k != p_t})
        solutions = sympy.solve(balance, p_t)
        if len(solutions) != 1:
            raise ResolverError(f"cannot isolate {p_t.name} from the balance law of {parent.name}")
        resolver[p_t] = closed(solutions[0])

    candidates = []
    for potential in potentials:
        if sympy.diff(potential.density, prime) == 0:
            continue
        flux = potential.flux if potential.flux is not None else resolver[jet_symbol(potential.name, 1, 0)]
        balance = closed(
            total_derivative(potential.density, "t", space)
            - total_derivative(flux, "x", space)
        )
        coefficient = sympy.diff(balance, u_t)
        if coefficient == 0:
            continue
        candidates.append((potential.name, sympy.together(-balance.xreplace({u_t: 0}) / coefficient)))
    if not candidates:
        raise ResolverError(f"{primary}_t cannot be eliminated: no density depends on {primary}")
    rhs = candidates[0][1]
    if domain is not None:
        for other, candidate in candidates[1:]:
            check = is_zero(sympy.expand(candidate - rhs), domain, trials=40, rng=make_rng(rng))
            if not check:
                raise ResolverError(
                    f"potentials {candidates[0][0]} and {other} give different {u_t.name} "
                    f"(residual {check.residual:.3g} at {check.witness})"
                )

    ordered = list(resolver.items())
    ordered.extend(evolution_resolver(rhs, primary, space))
    closed_map = dict(ordered)
    for potential in names:
        p_x = jet_symbol(potential, 0, 1)
        p_t = jet_symbol(potential, 1, 0)
        for key, base, iv in (
            (jet_symbol(potential, 0, 2), closed_map[p_x], "x"),
            (jet_symbol(potential, 1, 1), closed_map[p_t], "x"),
            (jet_symbol(potential, 2, 0), closed_map[p_t], "t"),
        ):
            value = total_derivative(base, iv, space).xreplace(closed_map)
            ordered.append((key, value))
            closed_map[key] = value
    characteristic = None
    if len(potentials) == 1:
        characteristic = sympy.diff(potentials[0].density, prime)
    return DifferentialSystem(
        name=name,
        jet_space=space,
        equations=tuple(equations),
        resolver=_triangular(ordered, name),
        primary=primary,
        potential=names[0],
        characteristic=characteristic,
    )


# --- Invariance criterion --- #
def invariance_residuals(system: DifferentialSystem, field_: VectorField) -> list[sympy.Expr]:
    """pr V applied to every equation, restricted to the solution manifold."""
    prolongation = Prolongation(field_, system.jet_space)
    return [system.resolve(prolongation.apply(eq)) for eq in system.equations]


@dataclass(frozen=True)
class SymmetryVerdict:
    verdict: str  # symmetry | not-symmetry | inconclusive
    worst: float
    worst_abs: float
    witness: dict[str, float]
    points: int
    singular: int
    seed: int | None
    residuals: int = 0

    @property
    def passed(self) -> bool:
        return self.verdict == "symmetry"


def check_symmetry(
    system: DifferentialSystem,
    field_: VectorField,
    domain: Domain | None = None,
    trials: int | None = None,
    seed: int | None = None,
    parameter_samples: int | None = None,
) -> SymmetryVerdict:
    """Sample the invariance residuals and classify the largest normalised one."""
    settings = config.load_settings().verification
    trials = settings.trials if trials is None else trials
    seed = settings.seed if seed is None else seed
    residuals = [sympy.expand(r) for r in invariance_residuals(system, field_)]
    nonzero = [r for r in residuals if r != 0]
    if not nonzero:
        return SymmetryVerdict("symmetry", 0.0, 0.0, {}, trials, 0, seed, len(residuals))
    try:
        sampled = sample_residuals(nonzero, domain or Domain(), trials, make_rng(seed), parameter_samples)
    except InconclusiveError:
        LOGGER.warning(f"All sample points singular for {field_.label or field_.to_text()} on {system.name}")
        return SymmetryVerdict("inconclusive", float("nan"), float("nan"), {}, 0, trials, seed, len(residuals))
    ratios = np.abs(sampled.values) / (1.0 + sampled.scales)
    ratios = np.where(sampled.valid, ratios, -np.inf).max(axis=0)
    column = int(np.argmax(ratios))
    worst = float(ratios[column])
    if worst <= settings.symmetry_pass:
        verdict = "symmetry"
    elif worst > settings.symmetry_fail:
        verdict = "not-symmetry"
    else:
        verdict = "inconclusive"
    return SymmetryVerdict(
        verdict=verdict,
        worst=worst,
        worst_abs=float(np.abs(sampled.values[:, column]).max()),
        witness=sampled.witness(column),
        points=int(sampled.valid.sum()),
        singular=int((~sampled.valid).sum()),
        seed=seed,
        residuals=len(residuals),
    )


# --- Potential lift --- #
def lift_truncated_operator(truncated: VectorField, system: DifferentialSystem) -> VectorField:
    """Extend tau d_t + xi d_x + theta d_v to the symmetry of the potential system with the implied eta."""
    if truncated.eta != 0:
        raise LiftError("the truncated operator must not have a d_u component")
    alpha = system.characteristic
    if alpha is None or system.potential is None:
        raise LiftError(f"{system.name} is not a simplest potential system v_x = alpha u")
    if alpha == 0 or is_zero(alpha, trials=20):
        raise LiftError(f"characteristic of {system.name} vanishes identically")
    t, x, u = symbol("t"), symbol("x"), symbol(system.primary)
    p = symbol(system.potential)
    tau, xi, theta = truncated.tau, truncated.xi, truncated.theta
    eta = (
        -sympy.diff(xi, p) * alpha**2 * u**2
        - (sympy.diff(alpha, t) * tau + alpha * sympy.diff(xi, x) + sympy.diff(alpha, x) * xi - alpha * sympy.diff(theta, p)) * u
        + sympy.diff(theta, x)
    ) / alpha
    return VectorField(
        tau=tau, xi=xi, eta=sympy.simplify(eta), theta=theta, zeta=truncated.zeta, label=truncated.label
    )


# --- Functional parameters --- #
@dataclass(frozen=True)
class FunctionalParameter:
    """An arbitrary solution of a linear side constraint, checked through instances.

    Placeholders are ``<name>`` and ``<name>_<letters>`` where letters are t or
    the argument (``phi_vv``); ``template`` is a k-family of exact solutions and
    ``substitution`` rewrites the argument afterwards (z -> w - x*v).
    """

    name: str
    argument: str
    constraint: str
    template: str
    k_values: tuple[float, ...] = (0.5, 1.0, 1.5)
    substitution: str | None = None
    orders: int = 2

    def __post_init__(self):
        if len(self.k_values) < 3:
            raise ValueError(f"functional parameter {self.name} needs at least three instances")

    @cached_property
    def placeholders(self) -> dict[str, tuple[int, int]]:
        names = {self.name: (0, 0)}
        for nt in range(self.orders + 1):
            for na in range(self.orders + 1 - nt):
                if nt + na:
                    names[f"{self.name}_{'t' * nt}{self.argument * na}"] = (nt, na)
                    names[f"{self.name}_{self.argument * na}{'t' * nt}"] = (nt, na)
        return names

    def namespace(self) -> dict[str, sympy.Symbol]:
        return {name: sympy.Symbol(name, real=True) for name in self.placeholders}

    def values(self, k: float, rewrite: bool = True) -> dict[sympy.Symbol, sympy.Expr]:
        """Placeholder symbol -> derivative of the k-instance."""
        template = parse(self.template).xreplace({symbol("k"): as_expr(k)})
        t, arg = symbol("t"), symbol(self.argument)
        table = {}
        for name, (nt, na) in self.placeholders.items():
            value = template
            if nt:
                value = sympy.diff(value, t, nt)
            if na:
                value = sympy.diff(value, arg, na)
            if rewrite and self.substitution:
                value = value.xreplace({arg: parse(self.substitution)})
            table[sympy.Symbol(name, real=True)] = value
        return table

    def constraint_residual(self, k: float) -> sympy.Expr:
        constraint = parse(self.constraint, self.namespace())
        return constraint.xreplace(self.values(k, rewrite=False))

    def check(self, domain: Domain | None = None, rng=None) -> None:
        for k in self.k_values:
            check = is_zero(self.constraint_residual(k), domain, trials=50, rng=make_rng(rng))
            if not check:
                raise LiftError(
                    f"instance k={k} of {self.name} violates {self.constraint} = 0 at {check.witness}"
                )

    def instantiate(self, field_: VectorField, k: float) -> VectorField:
        table = self.values(k)
        return field_.map(lambda coeff: coeff.xreplace(table))

