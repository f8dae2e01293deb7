"""Centralised result store fed by every worker."""

from __future__ import annotations

import enum
import json
import threading
from collections import Counter
from collections.abc import Iterable, Iterator
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Any

from ..codec import OPERATIONS, decode_arg, encode_arg, result_from_json, result_to_json
from ..registry import ErrorKind, ServiceError, TrnRecord, VoterResult
from ..text import fold

LOG_VERSION = 1


class OutcomeKind(enum.Enum):
    HIT = "hit"
    CATEGORY1 = "category1"
    UNREGISTERED = "unregistered"
    NOT_FOUND = "not-found"
    NEEDS_MORE_INFO = "needs-more-info"
    INVALID = "invalid"
    DEFENDED = "defended"
    TRANSPORT = "transport-error"

    __hash__ = object.__hash__  # identity hash; members are singletons


_BY_ERROR = {
    ErrorKind.CATEGORY1_REFUSAL: OutcomeKind.CATEGORY1,
    ErrorKind.UNREGISTERED: OutcomeKind.UNREGISTERED,
    ErrorKind.NOT_FOUND: OutcomeKind.NOT_FOUND,
    ErrorKind.NEEDS_MORE_INFO: OutcomeKind.NEEDS_MORE_INFO,
    ErrorKind.INVALID_FORMAT: OutcomeKind.INVALID,
    ErrorKind.RATE_LIMITED: OutcomeKind.DEFENDED,
    ErrorKind.CAPTCHA_REQUIRED: OutcomeKind.DEFENDED,
    ErrorKind.LOCKED_OUT: OutcomeKind.DEFENDED,
}


def classify(result: Any) -> OutcomeKind:
    if isinstance(result, ServiceError):
        return _BY_ERROR[result.kind]
    if result is None:
        return OutcomeKind.TRANSPORT
    return OutcomeKind.HIT


@dataclass(frozen=True, slots=True)
class Query:
    """One service call: operation name, positional arguments, target key."""

    op: str
    args: tuple
    target: str | None = None

    def arg_dict(self) -> dict[str, Any]:
        return dict(zip(OPERATIONS[self.op][1], self.args))


@dataclass(frozen=True, slots=True)
class ProbeOutcome:
    seq: int
    query: Query
    kind: OutcomeKind
    result: Any  # service result; None after a transport failure
    time: int
    ip: str
    worker: int

    @property
    def defense(self) -> ErrorKind | None:
        return self.result.kind if self.kind is OutcomeKind.DEFENDED else None

    def to_dict(self) -> dict[str, Any]:
        q = self.query
        return {
            "seq": self.seq,
            "op": q.op,
            "query": {k: encode_arg(k, v) for k, v in q.arg_dict().items()},
            "target": q.target,
            "outcome": self.kind.value,
            "result": None if self.result is None else result_to_json(self.result),
            "time": self.time,
            "ip": self.ip,
            "worker": self.worker,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> ProbeOutcome:
        names = OPERATIONS[d["op"]][1]
        args = tuple(decode_arg(n, d["query"][n]) for n in names if n in d["query"])
        result = None if d["result"] is None else result_from_json(d["result"])
        return cls(d["seq"], Query(d["op"], args, d["target"]), OutcomeKind(d["outcome"]), result,
                   d["time"], d["ip"], d["worker"])


class ResultStore:
    """Append-only outcome log plus indexes derived from it.

    ``keep_log=False`` keeps only the indexes and counters (large runs);
    ``sink`` additionally streams every outcome as a JSON line.
    """

    def __init__(self, keep_log: bool = True, sink: IO[str] | None = None):
        self.keep_log = keep_log
        self.sink = sink
        self.log: list[ProbeOutcome] = []
        self.counts: Counter[OutcomeKind] = Counter()
        self.defense_counts: Counter[str] = Counter()
        self.trn_records: dict[str, TrnRecord] = {}
        self.category1: set[str] = set()
        self.by_triple: dict[tuple[str, str, str], list[str]] = {}
        self.voter: dict[str, tuple[VoterResult, Query]] = {}
        self.amka: dict[str, tuple[str, Query]] = {}
        self.resolved: set[str] = set()
        self.hit_seqs: list[int] = []
        self.hit_times: list[int] = []
        self.queries = 0
        self.first_time: int | None = None
        self.last_time = 0
        self.captcha_failures = 0
        self.stalled_workers = 0
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return self.queries

    def append(self, outcome: ProbeOutcome) -> None:
        with self._lock:
            self._add(outcome)

    def record(self, query: Query, result: Any, time: int, ip: str, worker: int) -> ProbeOutcome:
        """Classify, number and append one outcome atomically."""
        with self._lock:
            out = ProbeOutcome(self.queries, query, classify(result), result, time, ip, worker)
            self._add(out)
        return out

    def _add(self, out: ProbeOutcome) -> None:
        self._index(out)
        if self.keep_log:
            self.log.append(out)
        if self.sink is not None:
            self.sink.write(json.dumps(out.to_dict(), ensure_ascii=False, separators=(",", ":")) + "\n")

    def _index(self, o: ProbeOutcome) -> None:
        self.queries += 1
        self.counts[o.kind] += 1
        if self.first_time is None or o.time < self.first_time:
            self.first_time = o.time
        self.last_time = max(self.last_time, o.time)
        kind, r, q = o.kind, o.result, o.query
        if kind is OutcomeKind.DEFENDED:
            self.defense_counts[r.kind.value] += 1
        elif kind is OutcomeKind.CATEGORY1:
            self.category1.add(q.args[0])
        elif kind is OutcomeKind.HIT:
            if isinstance(r, TrnRecord):
                if r.trn in self.trn_records:
                    return
                self.trn_records[r.trn] = r
                key = (fold(r.first_name), fold(r.last_name), fold(r.father_name))
                self.by_triple.setdefault(key, []).append(r.trn)
            elif isinstance(r, VoterResult):
                if q.target in self.voter:
                    return
                self.voter[q.target] = (r, q)
            elif isinstance(r, str) and q.op == "amka_search":
                if q.target in self.amka:
                    return
                self.amka[q.target] = (r, q)
            if q.target is not None:
                self.resolved.add(q.target)
            self.hit_seqs.append(o.seq)
            self.hit_times.append(o.time)

    @property
    def hits(self) -> int:
        return len(self.hit_seqs)

    def snapshot(self) -> dict[str, Any]:
        """Everything derived from the log, for replay comparisons."""
        return {
            "queries": self.queries,
            "counts": {k.value: v for k, v in sorted(self.counts.items(), key=lambda kv: kv[0].value)},
            "defense": dict(sorted(self.defense_counts.items())),
            "trn_records": dict(self.trn_records),
            "category1": sorted(self.category1),
            "by_triple": {k: list(v) for k, v in sorted(self.by_triple.items())},
            "voter": {k: v[0] for k, v in sorted(self.voter.items())},
            "amka": {k: v[0] for k, v in sorted(self.amka.items())},
            "hit_seqs": list(self.hit_seqs),
        }

    # --- log files ---

    def lines(self) -> Iterator[str]:
        yield json.dumps({"format": "civicleak-outcomes", "version": LOG_VERSION})
        for o in self.log:
            yield json.dumps(o.to_dict(), ensure_ascii=False, separators=(",", ":"))

    def save(self, path: str | Path) -> None:
        if not self.keep_log:
            raise ValueError("store was created without an in-memory log")
        Path(path).write_text("\n".join(self.lines()) + "\n", encoding="utf-8")

    @classmethod
    def replay(cls, outcomes: Iterable[ProbeOutcome | dict[str, Any]]) -> ResultStore:
        store = cls()
        for o in outcomes:
            store.append(o if isinstance(o, ProbeOutcome) else ProbeOutcome.from_dict(o))
        return store

    @classmethod
    def load(cls, path: str | Path) -> ResultStore:
        with open(path, encoding="utf-8") as fh:
            head = json.loads(fh.readline())
            if head.get("format") != "civicleak-outcomes" or head.get("version") != LOG_VERSION:
                raise ValueError(f"unsupported outcome log header {head!r}")
            return cls.replay(json.loads(line) for line in fh if line.strip())
