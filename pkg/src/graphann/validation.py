"""Exceptions and input checks shared across the package."""

import numpy as np
from sklearn.utils import check_array


class ContractError(ValueError):
    """A caller violated an operation's precondition."""


class FormatError(ValueError):
    """A file does not match its declared on-disk layout."""


class ConfigError(ValueError):
    """A pipeline or CLI configuration is inconsistent."""


def check_vectors(X, *, name="X"):
    """Validate a 2-D finite float32 array, C-contiguous."""
    try:
        return check_array(X, dtype=np.float32, order="C", input_name=name)
    except ValueError as exc:
        raise ContractError(str(exc)) from exc


def check_vector(q, dim):
    q = np.ascontiguousarray(q, dtype=np.float32)
    if q.ndim != 1 or q.shape[0] != dim:
        raise ContractError(f"query must be a vector of length {dim}, got shape {q.shape}")
    if not np.all(np.isfinite(q)):
        raise ContractError("query contains non-finite values")
    return q


def parse_kv_text(text):
    """Parse ``key=value`` lines; blank lines and ``#`` comments are skipped."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out
