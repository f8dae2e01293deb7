"""Discrete-event worker pool driving queries against a service handle.

Each worker owns one source address and a simulated clock. The worker with
the smallest ``(clock, index)`` draws the next query from a shared stream,
issues it, and advances its clock by the per-query cost. Rate-limit and
lockout refusals park the worker until the window reopens and the same query
is retried; CAPTCHA challenges are paid for through the defense cost model.
"""

from __future__ import annotations

import heapq
import random
import threading
from collections.abc import Iterable, Iterator
from dataclasses import dataclass
from typing import Any, Protocol

from ..defense import Challenge, DefensePolicy, Solved, resolve_challenge
from ..registry import ErrorKind, RequestContext, ServiceError
from ..wire import TransportError
from .store import Query, ResultStore


class ServiceHandle(Protocol):
    def trn_lookup(self, ctx: RequestContext, trn: str) -> Any: ...
    def voter_search(self, ctx: RequestContext, *args: Any) -> Any: ...
    def amka_search(self, ctx: RequestContext, *args: Any) -> Any: ...


@dataclass(frozen=True)
class EngineConfig:
    workers: int = 1
    ip_pool: tuple[str, ...] = ("10.0.0.1",)
    query_cost: int = 1  # simulated ms a worker spends per request
    start_time: int = 0  # simulated ms at which every worker's clock starts
    horizon: int | None = None  # no request is issued after this simulated time
    query_budget: int | None = None  # requests issued, refusals included
    record_budget: int | None = None  # hits
    captcha_attempts: int = 3
    captcha_solve_probability: float = 0.9
    transport_retries: int = 3
    backoff: int = 1_000  # ms, doubled per transport retry
    stall_limit: int = 16  # consecutive refusals after which a parked worker gives up
    threaded: bool = False
    seed: int = 0

    def __post_init__(self) -> None:
        if self.workers < 1:
            raise ValueError("workers must be positive")
        if self.workers > len(self.ip_pool):
            raise ValueError("each worker needs its own address: workers exceeds the ip pool")
        if self.stall_limit < 1:
            raise ValueError("stall_limit must be positive")
        if self.query_cost < 0 or self.backoff < 0 or self.start_time < 0:
            raise ValueError("costs must be non-negative")
        for b in (self.query_budget, self.record_budget, self.horizon):
            if b is not None and b < 0:
                raise ValueError("budgets must be non-negative")


@dataclass
class _Worker:
    index: int
    ip: str
    clock: int = 0
    pending: Query | None = None
    token: str | None = None
    stalls: int = 0


class _Stream:
    """Shared lazy query source; skips targets already resolved."""

    def __init__(self, queries: Iterable[Query], store: ResultStore):
        self._it: Iterator[Query] = iter(queries)
        self._store = store
        self._lock = threading.Lock()

    def draw(self) -> Query | None:
        with self._lock:
            for q in self._it:
                if q.target is None or q.target not in self._store.resolved:
                    return q
            return None


class Engine:
    def __init__(self, handle: ServiceHandle, config: EngineConfig | None = None,
                 store: ResultStore | None = None):
        self.handle = handle
        self.cfg = config or EngineConfig()
        self.store = store if store is not None else ResultStore()
        self._solver = DefensePolicy(captcha_solve_probability=self.cfg.captcha_solve_probability)
        self._budget_lock = threading.Lock()

    def _exhausted(self) -> bool:
        c, s = self.cfg, self.store
        return (c.query_budget is not None and s.queries >= c.query_budget) or (
            c.record_budget is not None and s.hits >= c.record_budget
        )

    def _call(self, w: _Worker, q: Query, rng: random.Random) -> int:
        """Issue ``q`` once (plus transport retries); return the worker's next clock."""
        cfg = self.cfg
        fn = getattr(self.handle, q.op)
        t = w.clock
        for attempt in range(cfg.transport_retries + 1):
            ctx = RequestContext(w.ip, t, None, w.token)
            try:
                result = fn(ctx, *q.args)
                break
            except TransportError:
                if attempt == cfg.transport_retries:
                    result = None
                    break
                t += cfg.backoff * 2**attempt
        w.token = None
        if cfg.horizon is not None and t > cfg.horizon:
            return t
        self.store.record(q, result, t, w.ip, w.index)
        if type(result) is not ServiceError or result.kind not in _DEFENSE:
            w.pending = None
            w.stalls = 0
            return t + cfg.query_cost
        if result.kind is ErrorKind.CAPTCHA_REQUIRED:
            return self._solve(w, q, result.challenge, t, rng)
        w.stalls += 1
        w.pending = q  # parked until the window reopens
        return t + max(1, result.retry_after or 1)

    def _solve(self, w: _Worker, q: Query, ch: Challenge, t: int, rng: random.Random) -> int:
        t += self.cfg.query_cost
        for _ in range(self.cfg.captcha_attempts):
            outcome = resolve_challenge(self._solver, ch, rng)
            t += outcome.cost
            if isinstance(outcome, Solved):
                w.token, w.pending = ch.id, q
                return t
        self.store.captcha_failures += 1
        w.pending = None
        return t

    def run(self, queries: Iterable[Query]) -> ResultStore:
        workers = [_Worker(i, self.cfg.ip_pool[i], self.cfg.start_time) for i in range(self.cfg.workers)]
        stream = _Stream(queries, self.store)
        if self.cfg.threaded:
            self._run_threaded(workers, stream)
        else:
            self._run_events(workers, stream)
        return self.store

    def _step(self, w: _Worker, stream: _Stream, rng: random.Random) -> bool:
        cfg = self.cfg
        if self._exhausted() or (cfg.horizon is not None and w.clock > cfg.horizon):
            return False
        if w.stalls >= cfg.stall_limit:
            self.store.stalled_workers += 1
            return False
        q = w.pending or stream.draw()
        if q is None:
            return False
        if q.target is not None and q.target in self.store.resolved:
            w.pending = None
            return True
        w.clock = self._call(w, q, rng)
        return True

    def _run_events(self, workers: list[_Worker], stream: _Stream) -> None:
        rng = random.Random(f"engine/{self.cfg.seed}")
        heap = [(w.clock, w.index) for w in workers]
        while heap:
            _, i = heapq.heappop(heap)
            w = workers[i]
            if self._step(w, stream, rng):
                heapq.heappush(heap, (w.clock, i))

    def _run_threaded(self, workers: list[_Worker], stream: _Stream) -> None:
        def loop(w: _Worker) -> None:
            rng = random.Random(f"engine/{self.cfg.seed}/{w.index}")
            while self._step(w, stream, rng):
                pass

        threads = [threading.Thread(target=loop, args=(w,), daemon=True) for w in workers]
        for th in threads:
            th.start()
        for th in threads:
            th.join()


_DEFENSE = frozenset({ErrorKind.RATE_LIMITED, ErrorKind.CAPTCHA_REQUIRED, ErrorKind.LOCKED_OUT})
