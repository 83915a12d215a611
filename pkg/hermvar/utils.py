"""Utility helpers shared between services."""
from __future__ import annotations

import math
import os
import tempfile
from pathlib import Path
from typing import Iterable

import numpy as np

from .logging_config import get_logger

logger = get_logger(__name__)


def compensated_sum(values: Iterable[float]) -> float:
    """Exactly rounded sum of partial sums, independent of their magnitudes."""
    return math.fsum(float(value) for value in values)


def is_geometric(values: Iterable[float], rtol: float = 1e-6) -> bool:
    """True when consecutive ratios of ``values`` agree to ``rtol``."""
    arr = np.asarray(list(values), dtype=float)
    if np.any(arr <= 0):
        return False
    if arr.size < 3:
        return True
    ratios = arr[1:] / arr[:-1]
    return bool(np.allclose(ratios, ratios[0], rtol=rtol, atol=0.0))


def atomic_write_bytes(path: str | os.PathLike[str], payload: bytes) -> Path:
    """Write ``payload`` to ``path`` through a temporary file and a rename."""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(dir=target.parent, prefix=f".{target.name}.")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(payload)
        os.replace(tmp_name, target)
    except BaseException:
        Path(tmp_name).unlink(missing_ok=True)
        raise
    logger.debug("Wrote %s (%s bytes)", target, len(payload))
    return target


def atomic_write_text(path: str | os.PathLike[str], text: str) -> Path:
    return atomic_write_bytes(path, text.encode("utf-8"))


__all__ = ["atomic_write_bytes", "atomic_write_text", "compensated_sum", "is_geometric"]
