"""Small shared helpers: order-preserving parallel map and JSON hygiene."""

from __future__ import annotations

import concurrent.futures
import math
import os


def default_workers() -> int:
    env = os.environ.get("JUNCTIONFLOW_WORKERS", "")
    try:
        return max(1, int(env))
    except ValueError:
        return 1


def parallel_starmap(fn, arg_tuples, workers: int):
    """Apply fn over argument tuples, results in input order.

    Falls back to a serial loop for one worker or tiny inputs; results are
    identical either way because each call is pure and reassembly is by index.
    """
    if workers <= 1 or len(arg_tuples) < 2:
        return [fn(*args) for args in arg_tuples]
    with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as ex:
        futures = [ex.submit(fn, *args) for args in arg_tuples]
        return [f.result() for f in futures]


def reject_non_finite(obj, path="$"):
    """Raise if a JSON-bound structure contains NaN or infinities."""
    if isinstance(obj, dict):
        for k, v in obj.items():
            reject_non_finite(v, f"{path}.{k}")
    elif isinstance(obj, (list, tuple)):
        for i, v in enumerate(obj):
            reject_non_finite(v, f"{path}[{i}]")
    elif isinstance(obj, float) and not math.isfinite(obj):
        raise ValueError(f"non-finite value at {path}")
