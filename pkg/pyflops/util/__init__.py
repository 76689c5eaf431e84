"""Define utility modules."""
from datetime import datetime
import hashlib
import json
from typing import Any

from dateutil import tz
from dateutil.parser import isoparse
import numpy as np

from pyflops.const import LOG  # noqa: F401


def canonical_json(document: Any) -> str:
    """Compact JSON with sorted keys; list order is kept."""
    return json.dumps(plain(document), sort_keys=True, separators=(",", ":"))


def config_digest(document: Any) -> str:
    """SHA-256 of the canonical JSON form."""
    return hashlib.sha256(canonical_json(document).encode("utf-8")).hexdigest()


def array_digest(array: np.ndarray) -> str:
    """SHA-256 of an array's dtype, shape and bytes."""
    contiguous = np.ascontiguousarray(array)
    digest = hashlib.sha256(f"{contiguous.dtype}{contiguous.shape}".encode("utf-8"))
    digest.update(contiguous.tobytes())
    return digest.hexdigest()


def utc_now() -> datetime:
    return datetime.now(tz=tz.tzutc())


def from_utc_timestamp(date_string: str) -> datetime:
    return isoparse(date_string).astimezone(tz.tzutc())


def plain(value: Any) -> Any:
    """Convert numpy scalars and arrays, recursively, to YAML-safe builtins."""
    if isinstance(value, dict):
        return {str(k): plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    return value
