"""Verification campaigns.

A campaign is a list of items (generator checks, solution audits, resolver
validations and transformation identities). Items run in worker threads under
a semaphore; each one gets a seed derived from the run seed and its id, so the
report does not depend on scheduling. A failing item is recorded and the
campaign moves on.
"""

import asyncio
import logging
import threading
from dataclasses import dataclass
from typing import Callable

import numpy as np
import sympy

from . import config, utils
from .catalog import AlgebraEntry, ArbitraryElements, Catalog, load_catalog
from .errors import InconclusiveError, InversionError, NonElementaryIntegralError, SymkitError
from .jets import VectorField, check_symmetry, lift_truncated_operator
from .reports import ItemRecord, RunMetadata, VerificationReport
from .symbolic import Domain, evaluate_array, is_zero, make_rng, parse
from .transforms import (
    Solution,
    TransformationParameters,
    class_operator,
    compose,
    extended_equivalence,
    g1_preserving,
    gauge_transform,
    hodograph,
    potential_shift,
    push_forward_system,
    push_forward_vectorfield,
    usual_equivalence,
)

LOGGER = logging.getLogger(__name__)

VERDICTS = {"symmetry": "pass", "not-symmetry": "fail", "inconclusive": "inconclusive"}
GAUGE_SAMPLES = 20
GAUGE_POINTS = 100
ROUND_TRIP_INSTANCES = 20
ROUND_TRIP_ATTEMPTS = 60
INVOLUTION_POINTS = 1000
SPAN_POINTS = 40

# pools for random elements; every h/g has an elementary antiderivative on x > 0
F_POOL = ("1", "x", "x^2", "exp(x)")
G_POOL = ("1", "x", "x^2 + 1")
H_POOL = ("1", "x", "1/x")
A_POOL = ("u^(-2)", "u", "exp(u)", "1 + u^2")
B_POOL = ("u^(-1)", "u^2", "u", "1")
X_POOL = ("x", "2*x + 1", "x^2", "exp(x)", "1/x", "log(x)", "x^(1/2)")
MAGNITUDES = (0.5, 1.0, 1.5, 2.0)


@dataclass(frozen=True)
class CampaignOptions:
    seed: int
    trials: int
    rtol: float
    parameter_samples: int
    jobs: int = 1

    @classmethod
    def from_settings(cls, seed: int | None = None, trials: int | None = None,
                      rtol: float | None = None, jobs: int = 1) -> "CampaignOptions":
        settings = config.load_settings().verification
        return cls(
            seed=settings.seed if seed is None else seed,
            trials=settings.trials if trials is None else trials,
            rtol=settings.rtol if rtol is None else rtol,
            parameter_samples=settings.parameter_samples,
            jobs=max(1, jobs),
        )


@dataclass(frozen=True)
class CampaignItem:
    id: str
    kind: str
    label: str
    run: Callable[[int], ItemRecord]


class SystemCache:
    """Builds each algebra's system once; failures are cached too."""

    def __init__(self, options: CampaignOptions):
        self.options = options
        self._lock = threading.Lock()
        self._systems: dict[str, object] = {}

    def get(self, entry: AlgebraEntry):
        with self._lock:
            if entry.id not in self._systems:
                try:
                    self._systems[entry.id] = entry.system(rng=utils.derive_seed(self.options.seed, entry.id))
                except SymkitError as exc:
                    self._systems[entry.id] = exc
            value = self._systems[entry.id]
        if isinstance(value, Exception):
            raise value
        return value


# --- Generator items --- #
def generator_items(catalog: Catalog, selector: str, options: CampaignOptions, cache: SystemCache) -> list[CampaignItem]:
    """One item per generator; functional generators give one item per instantiation."""
    items = []
    for entry in catalog.algebras(selector):
        for index, generator in enumerate(entry.generators, start=1):
            for suffix, vector in generator.instances():
                parts = [f"{entry.id}#{index}"]
                if generator.variant:
                    parts.append(f"[{generator.variant}]")
                if suffix:
                    parts.append(f"[{suffix}]")
                item_id = "".join(parts)
                items.append(CampaignItem(item_id, "generator", generator.label,
                                          _generator_check(entry, vector, options, cache, item_id)))
    return items


def _generator_check(entry, vector: VectorField, options, cache, item_id) -> Callable[[int], ItemRecord]:
    def run(seed: int) -> ItemRecord:
        system = cache.get(entry)
        verdict = check_symmetry(system, vector, entry.domain, options.trials, seed, options.parameter_samples)
        return ItemRecord(
            id=item_id, kind="generator", verdict=VERDICTS[verdict.verdict], label=vector.label,
            worst=verdict.worst, worst_abs=verdict.worst_abs, witness=verdict.witness,
            points=verdict.points, singular=verdict.singular, seed=seed,
        )
    return run


def lift_items(catalog: Catalog, selector: str, cache: SystemCache) -> list[CampaignItem]:
    """The eta of each plain system-1 generator must follow from its (t, x, v) part."""
    items = []
    for entry in catalog.algebras(selector):
        if entry.spec.system != "system-1":
            continue
        for index, generator in enumerate(entry.generators, start=1):
            if generator.functional is not None:
                continue
            item_id = f"lift/{entry.id}#{index}" + (f"[{generator.variant}]" if generator.variant else "")

            def run(seed: int, entry=entry, field_=generator.field, item_id=item_id) -> ItemRecord:
                system = cache.get(entry)
                truncated = VectorField(tau=field_.tau, xi=field_.xi, theta=field_.theta, label=field_.label)
                lifted = lift_truncated_operator(truncated, system)
                check = is_zero(sympy.expand(lifted.eta - field_.eta), entry.domain, trials=60, rng=seed)
                return ItemRecord(
                    id=item_id, kind="transformation-identity", label=field_.label,
                    verdict="pass" if check else "fail", worst=check.residual,
                    witness=check.witness, points=check.points, singular=check.singular, seed=seed,
                    message=None if check else "lifted eta differs from the printed one",
                )
            items.append(CampaignItem(item_id, "transformation-identity", generator.label, run))
    return items


# --- Solution and resolver items --- #
def solution_items(catalog: Catalog, equation_id: str, options: CampaignOptions) -> list[CampaignItem]:
    catalog.equation(equation_id)
    items = []
    for entry in catalog.solutions(equation_id):
        if not entry.in_scope:
            def run(seed: int, entry=entry) -> ItemRecord:
                return ItemRecord(id=entry.id, kind="solution", verdict="out-of-scope", seed=seed,
                                  expected=entry.spec.expected, message=entry.spec.notes or "implicit or parametric")
            items.append(CampaignItem(entry.id, "solution", "", run))
            continue

        def run(seed: int, entry=entry) -> ItemRecord:
            check = Solution.from_entry(entry).check(entry.equation(), trials=options.trials, seed=seed)
            return ItemRecord(
                id=entry.id, kind="solution", verdict=check.verdict, label=entry.spec.u or "",
                worst=check.worst, worst_abs=check.worst_abs, fd_worst=check.fd_worst,
                witness=check.witness, points=check.points, singular=check.singular, seed=seed,
                expected=entry.spec.expected,
            )
        items.append(CampaignItem(entry.id, "solution", entry.spec.u or "", run))

        if entry.potential is not None:
            item_id = f"{entry.id}/potential"

            def run_potential(seed: int, entry=entry, item_id=item_id) -> ItemRecord:
                elements = ArbitraryElements.from_spec(catalog.equation(entry.spec.equation).elements)
                system = catalog.build_potential_system("system-1", elements, domain=entry.domain, rng=seed)
                check = Solution.from_entry(entry).check(system, trials=options.trials, seed=seed)
                return ItemRecord(
                    id=item_id, kind="solution", verdict=check.verdict, label=entry.spec.potential,
                    worst=check.worst, worst_abs=check.worst_abs, fd_worst=check.fd_worst,
                    witness=check.witness, points=check.points, singular=check.singular, seed=seed,
                )
            items.append(CampaignItem(item_id, "solution", entry.spec.potential, run_potential))
    return items


def resolver_items(catalog: Catalog) -> list[CampaignItem]:
    items = []
    for case in catalog.cases():
        item_id = f"resolver/{case.id}"

        def run(seed: int, case_id=case.id, item_id=item_id) -> ItemRecord:
            system = catalog.build_potential_system(case_id, rng=seed)
            return ItemRecord(id=item_id, kind="resolver", verdict="pass", seed=seed,
                              label=f"{len(system.equations)} equations")
        items.append(CampaignItem(item_id, "resolver", case.id, run))
    return items


# --- Transformation identities --- #
def _signed(rng: np.random.Generator) -> float:
    return float(rng.choice(MAGNITUDES) * rng.choice((-1.0, 1.0)))


def random_elements(rng: np.random.Generator, g_one: bool = False) -> ArbitraryElements:
    pick = lambda pool: parse(str(rng.choice(pool)))  # noqa: E731
    return ArbitraryElements(
        f=pick(F_POOL), g=1 if g_one else pick(G_POOL), h=pick(("1", "1/x", "2") if g_one else H_POOL),
        A=pick(A_POOL), B=pick(B_POOL),
    )


def random_parameters(rng: np.random.Generator) -> TransformationParameters:
    delta = [_signed(rng), float(rng.uniform(-1, 1)), _signed(rng), float(rng.uniform(-1, 1)),
             _signed(rng), float(rng.uniform(-1, 1)), _signed(rng), float(rng.choice((-0.5, 0.5, 1.0, 2.0))), _signed(rng)]
    eps = [_signed(rng), _signed(rng), _signed(rng), float(rng.choice((-1.0, -0.5, 0.5, 1.0)))]
    return TransformationParameters(
        delta=tuple(round(d, 2) for d in delta), eps=tuple(eps), X=parse(str(rng.choice(X_POOL))),
    )


def _elements_differ(first: ArbitraryElements, second: ArbitraryElements, domain: Domain, rtol: float, rng):
    for name in ("f", "g", "h", "A", "B"):
        check = is_zero(getattr(first, name) - getattr(second, name), domain, trials=40, rng=rng, rtol=rtol)
        if not check:
            return name, check
    return None


def gauge_identity(seed: int, options: CampaignOptions) -> ItemRecord:
    """operator(gauge(el)) = eps1 phi operator(el) for random elements and parameters."""
    rng = make_rng(seed)
    worst = 0.0
    for sample in range(GAUGE_SAMPLES):
        elements = random_elements(rng)
        params = random_parameters(rng)
        transform = gauge_transform(params)
        residual = sympy.expand(class_operator(transform.apply(elements)) - transform.factor(elements) * class_operator(elements))
        check = is_zero(residual, elements.domain, trials=GAUGE_POINTS, rng=rng, rtol=options.rtol)
        worst = max(worst, check.residual / (1.0 + check.scale))
        if not check:
            return ItemRecord(id="gauge-identity", kind="transformation-identity", verdict="fail", worst=worst,
                              witness=check.witness, seed=seed,
                              message=f"sample {sample}: f={elements.f}, g={elements.g}, h={elements.h}, eps={params.eps}")
    return ItemRecord(id="gauge-identity", kind="transformation-identity", verdict="pass", worst=worst,
                      points=GAUGE_SAMPLES * GAUGE_POINTS, seed=seed)


def hodograph_involution(seed: int) -> ItemRecord:
    rng = make_rng(seed)
    transform = hodograph()
    domain = Domain()
    points = domain.sample(["t", "x", "u", "v"], INVOLUTION_POINTS, rng, parameter_samples=1)
    once = {var: evaluate_array(transform.forward_of(var), points, INVOLUTION_POINTS) for var in ("t", "x", "u", "v")}
    twice = {var: evaluate_array(transform.forward_of(var), once, INVOLUTION_POINTS) for var in ("t", "x", "u", "v")}
    error = max(float(np.max(np.abs(twice[v] - points[v]) / (1.0 + np.abs(points[v])))) for v in points)
    return ItemRecord(id="hodograph-involution", kind="transformation-identity",
                      verdict="pass" if error <= 1e-12 else "fail", worst=error,
                      points=INVOLUTION_POINTS, seed=seed)


def _round_trip_instance(kind: str, rng: np.random.Generator):
    params = random_parameters(rng)
    if kind == "usual":
        elements = random_elements(rng)
        return usual_equivalence(params), elements
    if kind == "extended":
        elements = random_elements(rng)
        return extended_equivalence(params), elements
    if kind == "gauge":
        elements = random_elements(rng)
        return gauge_transform(params), elements
    if kind == "g1-preserving":
        elements = random_elements(rng, g_one=True)
        return g1_preserving(params, elements), elements
    elements = ArbitraryElements(A=parse(str(rng.choice(A_POOL))), B=parse(str(rng.choice(("u^(-1)", "u^2", "u", "1")))))
    return potential_shift(float(rng.choice((-0.25, 0.25, 0.5, 1.0)))), elements


def round_trip(kind: str, seed: int, options: CampaignOptions) -> ItemRecord:
    """compose(T, inverse(T)) is the identity on variables and on elements.

    Instances without elementary integrals or a closed-form inverse are redrawn
    and counted in the message.
    """
    rng = make_rng(seed)
    item_id = f"round-trip/{kind}"
    checked, redrawn = 0, 0
    for instance in range(ROUND_TRIP_ATTEMPTS):
        if checked == ROUND_TRIP_INSTANCES:
            break
        try:
            transform, elements = _round_trip_instance(kind, rng)
            inverse = transform.inverse()
            identity = compose(transform, inverse)
            restored = inverse.apply(transform.apply(elements))
        except (NonElementaryIntegralError, InversionError) as exc:
            LOGGER.debug(f"Redrawing {item_id} instance {instance}: {exc}")
            redrawn += 1
            continue
        checked += 1
        for var in identity.variables:
            check = is_zero(identity.forward_of(var) - parse(var), elements.domain, trials=40, rng=rng, rtol=options.rtol)
            if not check:
                return ItemRecord(id=item_id, kind="transformation-identity", verdict="fail", seed=seed,
                                  worst=check.residual, witness=check.witness,
                                  message=f"instance {instance}: {var} not restored by {identity.name}")
        differs = _elements_differ(restored, elements, elements.domain, options.rtol, rng)
        if differs is not None:
            name, check = differs
            return ItemRecord(id=item_id, kind="transformation-identity", verdict="fail", seed=seed,
                              worst=check.residual, witness=check.witness,
                              message=f"instance {instance}: element {name} not restored")
    message = f"{redrawn} non-elementary instance(s) redrawn" if redrawn else None
    if checked < ROUND_TRIP_INSTANCES:
        return ItemRecord(id=item_id, kind="transformation-identity", verdict="inconclusive", seed=seed,
                          points=checked, message=f"only {checked} of {ROUND_TRIP_INSTANCES} instances are elementary")
    return ItemRecord(id=item_id, kind="transformation-identity", verdict="pass", seed=seed,
                      points=checked, message=message)


def hodograph_span(seed: int, catalog: Catalog, options: CampaignOptions, cache: SystemCache) -> ItemRecord:
    """Images of the x^(-4/3) potential symmetries span the algebra of the v-equation and stay symmetries."""
    item_id = "hodograph/system-1/eq13"
    source = catalog.algebra("system-1/eq13")
    target = catalog.algebra("equation/v-4-3")
    transform = hodograph()
    images = [push_forward_vectorfield(transform, g.field, source.domain) for g in source.generators]

    image_system = push_forward_system(transform, cache.get(source))
    worst = 0.0
    for image in images:
        verdict = check_symmetry(image_system, image, target.domain, options.trials, seed, options.parameter_samples)
        worst = max(worst, verdict.worst)
        if not verdict.passed:
            return ItemRecord(id=item_id, kind="transformation-identity", verdict=VERDICTS[verdict.verdict],
                              worst=verdict.worst, witness=verdict.witness, seed=seed,
                              message=f"image of {image.label} is not a symmetry of {image_system.name}")

    points = target.domain.sample(["t", "x", "u", "v"], SPAN_POINTS, make_rng(seed), parameter_samples=1)

    def rows(fields):
        return np.vstack([
            np.concatenate([evaluate_array(field_.coefficient(var), points, SPAN_POINTS) for var in ("t", "x", "v")])
            for field_ in fields
        ])

    image_rows = rows(images)
    target_rows = rows([g.field for g in target.generators])
    if not (np.all(np.isfinite(image_rows)) and np.all(np.isfinite(target_rows))):
        raise InconclusiveError("singular coefficients at the span sample points")
    tolerance = 1e-8 * max(np.abs(image_rows).max(), np.abs(target_rows).max())
    ranks = [np.linalg.matrix_rank(m, tol=tolerance) for m in (image_rows, target_rows, np.vstack([image_rows, target_rows]))]
    dimension = len(target.generators)
    passed = ranks == [dimension] * 3
    return ItemRecord(id=item_id, kind="transformation-identity", verdict="pass" if passed else "fail",
                      worst=worst, points=SPAN_POINTS, seed=seed,
                      message=None if passed else f"ranks image/target/joint = {ranks}, expected {dimension}")


def transformation_items(catalog: Catalog, options: CampaignOptions, cache: SystemCache) -> list[CampaignItem]:
    items = [
        CampaignItem("gauge-identity", "transformation-identity", "", lambda seed: gauge_identity(seed, options)),
        CampaignItem("hodograph-involution", "transformation-identity", "", hodograph_involution),
        CampaignItem("hodograph/system-1/eq13", "transformation-identity", "",
                     lambda seed: hodograph_span(seed, catalog, options, cache)),
    ]
    for kind in ("usual", "extended", "gauge", "g1-preserving", "potential-shift"):
        items.append(CampaignItem(f"round-trip/{kind}", "transformation-identity", kind,
                                  lambda seed, kind=kind: round_trip(kind, seed, options)))
    return items


# --- Runner --- #
async def run_items(items: list[CampaignItem], options: CampaignOptions) -> list[ItemRecord]:
    """Run items in worker threads, at most options.jobs at a time."""
    semaphore = asyncio.Semaphore(options.jobs)
    LOGGER.info(f"Running {len(items)} items with {options.jobs} worker(s)")

    async def worker(item: CampaignItem) -> ItemRecord:
        seed = utils.derive_seed(options.seed, item.id)
        async with semaphore:
            try:
                record = await asyncio.to_thread(item.run, seed)
            except SymkitError as e:
                record = ItemRecord(id=item.id, kind=item.kind, verdict="fail", label=item.label,
                                    seed=seed, message=f"{type(e).__name__}: {e}")
            except Exception as e:
                LOGGER.error(f"An unexpected error occurred while checking {item.id}: {e}")
                record = ItemRecord(id=item.id, kind=item.kind, verdict="fail", label=item.label,
                                    seed=seed, message=f"{type(e).__name__}: {e}")
        if record.verdict in ("fail", "inconclusive"):
            LOGGER.warning(f"{record.verdict}: {record.id} {record.message or ''}".rstrip())
        else:
            LOGGER.debug(f"{record.verdict}: {record.id}")
        return record

    return list(await asyncio.gather(*(worker(item) for item in items)))


def build_report(command: str, selector: str | None, options: CampaignOptions,
                 records: list[ItemRecord], catalog: Catalog) -> VerificationReport:
    settings = config.load_settings().verification
    metadata = RunMetadata(
        command=command, selector=selector, seed=options.seed, trials=options.trials, rtol=options.rtol,
        atol=settings.atol, parameter_samples=options.parameter_samples,
        symmetry_pass=settings.symmetry_pass, symmetry_fail=settings.symmetry_fail,
        solution_pass=settings.solution_pass, catalog_version=catalog.data.version,
    )
    report = VerificationReport(metadata=metadata, records=records)
    counts = report.counts()
    LOGGER.info(
        f"{command}: {counts['pass']} pass, {counts['fail']} fail, "
        f"{counts['inconclusive']} inconclusive, {counts['out-of-scope']} out-of-scope"
    )
    return report


async def verify_algebras(selector: str, options: CampaignOptions, catalog: Catalog | None = None) -> VerificationReport:
    catalog = catalog or load_catalog()
    items = generator_items(catalog, selector, options, SystemCache(options))
    return build_report("verify-algebra", selector, options, await run_items(items, options), catalog)


async def audit_solutions(equation_id: str, options: CampaignOptions, catalog: Catalog | None = None) -> VerificationReport:
    catalog = catalog or load_catalog()
    items = solution_items(catalog, equation_id, options)
    return build_report("audit-solutions", equation_id, options, await run_items(items, options), catalog)


async def verify_all(options: CampaignOptions, catalog: Catalog | None = None) -> VerificationReport:
    """Every algebra, lift and resolver check, the transformation identities and the solution audit."""
    catalog = catalog or load_catalog()
    cache = SystemCache(options)
    items = (
        generator_items(catalog, "all", options, cache)
        + lift_items(catalog, "all", cache)
        + resolver_items(catalog)
        + transformation_items(catalog, options, cache)
        + solution_items(catalog, "fujita-storm", options)
    )
    return build_report("verify-all", None, options, await run_items(items, options), catalog)
