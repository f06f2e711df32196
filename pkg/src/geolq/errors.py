"""Exception hierarchy shared across the package.

Everything user-facing derives from GlqError so the CLI can map failures to
exit codes in one place (data problems vs. verification failures).
"""


class GlqError(Exception):
    """Base class for all errors raised by this package."""


class GeometryError(GlqError):
    """Invalid shape definition (bad ring, too few vertices, non-finite)."""


class LoadError(GlqError):
    """Ingestion failure. Carries file and line context when available."""

    def __init__(self, message, source=None, line=None):
        self.source = source
        self.line = line
        prefix = ""
        if source is not None:
            prefix = f"{source}: " if line is None else f"{source}:{line}: "
        super().__init__(prefix + message)


class CatalogError(GlqError):
    """Catalog misuse: name collisions, unknown relations, bad rows."""


class QuerySyntaxError(GlqError):
    """Query text does not lex/parse. Carries line and column (1-based)."""

    def __init__(self, message, line, column):
        self.line = line
        self.column = column
        super().__init__(f"line {line}, column {column}: {message}")


class QueryValidationError(GlqError):
    """Query parsed but is not runnable (mode, arity, binding problems)."""


class EvalError(GlqError):
    """Runtime evaluation failure in either engine."""


class VerificationError(GlqError):
    """Result verification against an oracle or across modes failed."""
