"""Exception hierarchy for symkit-dc.

Library code raises these; only the CLI turns them into exit codes.
"""

from __future__ import annotations


class SymkitError(Exception):
    """Base class for every error raised by the package."""


# --- symbolic core --- #
class ExpressionSyntaxError(SymkitError):
    """Malformed expression text."""

    def __init__(self, message: str, position: int | None = None):
        self.position = position
        where = f" at position {position}" if position is not None else ""
        super().__init__(f"{message}{where}")


class UnknownSymbolError(ExpressionSyntaxError):
    """Identifier outside the declared symbol set."""


class BindingError(SymkitError):
    """Substitution target that is not a declared name."""


class DomainEvaluationError(SymkitError):
    """Numeric evaluation left the real domain (ln of non-positive, 1/0, ...)."""


class InconclusiveError(SymkitError):
    """Every sampled point hit a singularity, so no verdict can be given."""


class NonElementaryIntegralError(SymkitError):
    """An antiderivative has no elementary closed form."""


# --- jet calculus --- #
class JetOrderError(SymkitError):
    """Total derivative would leave the declared jet space."""


class ResolverError(SymkitError):
    """On-manifold resolver is inconsistent or cannot eliminate a coordinate."""


class LiftError(SymkitError):
    """Truncated operator cannot be lifted (characteristic vanishes)."""


# --- catalog --- #
class ElementError(SymkitError):
    """Arbitrary elements violate the class conditions (f g A != 0, A = A(u), ...)."""


class ConstraintError(SymkitError):
    """Elements do not satisfy a potential-system applicability condition."""

    def __init__(self, condition: str, detail: str = ""):
        self.condition = condition
        super().__init__(f"constraint violated: {condition}" + (f" ({detail})" if detail else ""))


class UnknownCatalogIdError(SymkitError):
    """Selector or identifier that matches nothing in the catalog."""


class CatalogSchemaError(SymkitError):
    """Catalog or spec file that does not match its JSON schema."""

    def __init__(self, pointer: str, message: str):
        self.pointer = pointer
        super().__init__(f"{pointer}: {message}")


# --- transforms --- #
class TransformationError(SymkitError):
    """Transformation cannot be built or applied."""


class DegenerateTransformationError(TransformationError):
    """Nondegeneracy condition of a transformation family fails."""


class InversionError(TransformationError):
    """A variable map has no closed-form inverse on the domain."""


# --- reports --- #
class ReportError(SymkitError):
    """Unknown run id or unsupported report format."""
