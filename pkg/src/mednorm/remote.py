"""Minimal JSON-over-HTTP client shared by remote embedders and translators."""

from __future__ import annotations

import json
import logging
import time
import urllib.error
import urllib.request
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

logger = logging.getLogger(__name__)

T = TypeVar("T")


class TransportError(RuntimeError):
    pass


def post_json(url: str, payload: dict, timeout: float = 30.0, retries: int = 3, backoff: float = 0.5) -> dict:
    """POST ``payload`` and decode the JSON reply, retrying transient failures."""
    body = json.dumps(payload).encode("utf-8")
    last: Exception | None = None
    for attempt in range(retries + 1):
        req = urllib.request.Request(url, data=body, headers={"Content-Type": "application/json"}, method="POST")
        try:
            with urllib.request.urlopen(req, timeout=timeout) as resp:
                return json.loads(resp.read().decode("utf-8"))
        except (urllib.error.URLError, OSError, json.JSONDecodeError) as e:
            last = e
            logger.debug("request to %s failed (attempt %d): %s", url, attempt + 1, e)
            if attempt < retries:
                time.sleep(backoff * 2 ** attempt)
    raise TransportError(f"{url}: giving up after {retries + 1} attempts: {last}")


def map_batches(fn: Callable[[Sequence[str]], list[T]], items: Sequence[str], batch_size: int,
                max_in_flight: int = 4) -> list[T]:
    """Apply ``fn`` to consecutive batches with bounded concurrency; output keeps input order."""
    batches = [items[i:i + batch_size] for i in range(0, len(items), batch_size)]
    if max_in_flight <= 1 or len(batches) <= 1:
        results = [fn(b) for b in batches]
    else:
        with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
            results = list(pool.map(fn, batches))
    out: list[T] = []
    for b, r in zip(batches, results):
        if len(r) != len(b):
            raise TransportError(f"expected {len(b)} results, got {len(r)}")
        out.extend(r)
    return out
