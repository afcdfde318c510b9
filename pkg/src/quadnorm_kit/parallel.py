"""Order-preserving parallel map capped by ``QNK_THREADS``."""

from __future__ import annotations

import os
import threading
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager

_override: int | None = None
_lock = threading.Lock()


def thread_count() -> int:
    if _override is not None:
        return _override
    raw = os.environ.get("QNK_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ValueError(f"QNK_THREADS must be a positive integer, got {raw!r}") from None


@contextmanager
def threads(n: int):
    global _override
    with _lock:
        prev, _override = _override, max(1, int(n))
    try:
        yield
    finally:
        with _lock:
            _override = prev


def pmap(fn, items):
    """``[fn(i) for i in items]``, possibly on worker threads; result order is fixed."""
    items = list(items)
    n = min(thread_count(), len(items))
    if n <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=n) as ex:
        return list(ex.map(fn, items))
