"""Exception taxonomy shared across the package.

Each exception carries a short machine-readable ``category`` used by the CLI
for its one-line error output and exit codes.
"""


class WagparseError(Exception):
    category = "internal"


class StructuralError(WagparseError):
    """Shape mismatches, bad graph indices, malformed structures."""

    category = "structural"


class InputError(WagparseError):
    """Caller passed data that violates a precondition."""

    category = "input"


class NumericError(WagparseError):
    """Non-finite values where finite ones are required."""

    category = "numeric"


class ConfigError(WagparseError):
    """Invalid configuration or regime/corpus mismatch."""

    category = "config"


class ContractionError(WagparseError):
    """WAG contraction has no aligned node to absorb into."""

    category = "contraction"
