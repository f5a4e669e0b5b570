"""Deterministic seeding and small shared helpers."""
from __future__ import annotations

import hashlib
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

_MASK63 = (1 << 63) - 1


def child_seed(*parts) -> int:
    """Derive a stable 63-bit seed from a master seed plus context parts.

    Parts may be ints or strings. The derivation does not depend on Python's
    per-process hash randomization, so the same parts always give the same
    seed, across runs and across machines.
    """
    blob = "\x1f".join(str(p) for p in parts).encode("utf-8")
    digest = hashlib.blake2b(blob, digest_size=8).digest()
    return int.from_bytes(digest, "big") & _MASK63


def spawn_rng(*parts) -> np.random.Generator:
    return np.random.default_rng(child_seed(*parts))


def unit_score(*parts) -> float:
    """Deterministic pseudo-uniform value in [0, 1) keyed by the parts."""
    return child_seed(*parts) / float(1 << 63)


def resolve_threads(threads: int | None) -> int:
    """Thread count from an explicit value, NAOP_THREADS, or 1."""
    if threads is not None and threads >= 1:
        return int(threads)
    env = os.environ.get("NAOP_THREADS", "").strip()
    if env.isdigit() and int(env) >= 1:
        return int(env)
    return 1


def thread_map(fn, items, threads: int | None = None) -> list:
    """Order-preserving map, optionally over a thread pool.

    Results never depend on the thread count: each work item must carry its
    own pre-derived seed and no item may mutate shared state.
    """
    items = list(items)
    n = resolve_threads(threads)
    if n <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))
