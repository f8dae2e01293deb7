"""Countermeasures placed in front of the registry services.

Request admission (daily quota, CAPTCHA after a run of successive requests,
optional lockout), document sanitisation, decoy planting and detection, and
per-author leak attribution.
"""

from __future__ import annotations

import enum
import json
import random
import re
import threading
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field, replace
from types import MappingProxyType
from typing import Any

from .model import IDENTIFIER_KINDS, Annotation, AnnotationKind, Document, World

DAY_MS = 86_400_000


@dataclass(frozen=True)
class SanitizationPolicy:
    surname_length: int = 5
    keep_prefix: Mapping[AnnotationKind, int] = field(
        default_factory=lambda: MappingProxyType(
            {AnnotationKind.ID_CARD: 4, AnnotationKind.TRN: 4, AnnotationKind.AMKA: 6}
        )
    )
    mask_char: str = "*"

    def __post_init__(self) -> None:
        if self.surname_length < 1:
            raise ValueError("surname_length must be at least 1")
        if any(v < 1 for v in self.keep_prefix.values()):
            raise ValueError("keep-prefix lengths must be at least 1")


@dataclass(frozen=True)
class DefensePolicy:
    daily_quota: int | None = None
    allowlist: Mapping[str, int] = field(default_factory=dict)
    captcha_after: int | None = None
    captcha_cost: int = 30_000  # ms of attacker time per solve attempt
    captcha_solve_probability: float = 0.9
    lockout: tuple[int, int] | None = None  # (requests, window_ms)
    sanitization: SanitizationPolicy = field(default_factory=SanitizationPolicy)
    decoy_count: int = 0

    def __post_init__(self) -> None:
        if self.daily_quota is not None and self.daily_quota < 0:
            raise ValueError("daily_quota must be non-negative")
        if self.captcha_after is not None and self.captcha_after < 1:
            raise ValueError("captcha_after must be positive")
        if self.lockout is not None and (self.lockout[0] < 1 or self.lockout[1] < 1):
            raise ValueError("lockout thresholds must be positive")
        if not 0.0 <= self.captcha_solve_probability <= 1.0:
            raise ValueError("captcha_solve_probability must lie in [0, 1]")
        if self.captcha_cost < 0 or self.decoy_count < 0:
            raise ValueError("captcha_cost and decoy_count must be non-negative")

    @property
    def gates_requests(self) -> bool:
        return self.daily_quota is not None or self.captcha_after is not None or self.lockout is not None

    def quota_for(self, ip: str) -> int | None:
        return self.allowlist.get(ip, self.daily_quota)

    def to_dict(self) -> dict[str, Any]:
        return {
            "daily_quota": self.daily_quota,
            "allowlist": dict(self.allowlist),
            "captcha_after": self.captcha_after,
            "captcha_cost": self.captcha_cost,
            "captcha_solve_probability": self.captcha_solve_probability,
            "lockout": list(self.lockout) if self.lockout else None,
            "sanitization": {
                "surname_length": self.sanitization.surname_length,
                "keep_prefix": {k.value: v for k, v in self.sanitization.keep_prefix.items()},
                "mask_char": self.sanitization.mask_char,
            },
            "decoy_count": self.decoy_count,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> DefensePolicy:
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown defense keys: {sorted(unknown)}")
        kw = dict(data)
        if kw.get("lockout") is not None:
            kw["lockout"] = tuple(kw["lockout"])
        if "allowlist" in kw:
            kw["allowlist"] = dict(kw["allowlist"] or {})
        if kw.get("sanitization") is not None:
            s = dict(kw["sanitization"])
            if "keep_prefix" in s:
                s["keep_prefix"] = MappingProxyType(
                    {AnnotationKind(k): int(v) for k, v in s["keep_prefix"].items()}
                )
            kw["sanitization"] = SanitizationPolicy(**s)
        else:
            kw.pop("sanitization", None)
        return cls(**kw)


# --- admission ---------------------------------------------------------------


class DenyReason(enum.Enum):
    RATE_LIMITED = "rate-limited"
    LOCKED_OUT = "locked-out"


@dataclass(frozen=True)
class Allow:
    pass


@dataclass(frozen=True)
class Challenge:
    id: str
    cost: int


@dataclass(frozen=True)
class Deny:
    reason: DenyReason
    retry_after: int  # ms until the relevant window expires


ALLOW = Allow()


class DetectionKind(enum.Enum):
    DECOY_EXFILTRATED = "decoy-exfiltrated"
    QUOTA_EXCEEDED = "quota-exceeded"
    LOCKOUT_TRIGGERED = "lockout-triggered"


@dataclass(frozen=True)
class DetectionEvent:
    kind: DetectionKind
    subject: str
    time: int

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind.value, "subject": self.subject, "time": self.time}


@dataclass
class _IpState:
    day: int = -1
    count: int = 0
    flagged_day: int = -1
    lock_window: int = -1
    lock_count: int = 0
    locked_until: int = -1


@dataclass
class DefenseState:
    """Mutable per-service bookkeeping; one instance per defended service."""

    ips: dict[str, _IpState] = field(default_factory=dict)
    run_ip: str | None = None
    run_length: int = 0
    challenges: dict[str, str] = field(default_factory=dict)
    issued: int = 0
    events: list[DetectionEvent] = field(default_factory=list)


def admit(policy: DefensePolicy, state: DefenseState, ctx) -> Allow | Challenge | Deny:
    """Decide one request. Windows are fixed, aligned to simulated days."""
    ip, t = ctx.source_ip, ctx.time
    st = state.ips.get(ip)
    if st is None:
        st = state.ips[ip] = _IpState()
    day = t // DAY_MS
    if st.day != day:
        st.day, st.count = day, 0
        if state.run_ip == ip:
            state.run_length = 0
    if st.locked_until > t:
        return Deny(DenyReason.LOCKED_OUT, st.locked_until - t)
    if policy.lockout is not None:
        limit, window = policy.lockout
        w = t // window
        if st.lock_window != w:
            st.lock_window, st.lock_count = w, 0
        st.lock_count += 1
        if st.lock_count > limit:
            st.locked_until = (w + 1) * window
            state.events.append(DetectionEvent(DetectionKind.LOCKOUT_TRIGGERED, ip, t))
            return Deny(DenyReason.LOCKED_OUT, st.locked_until - t)
    quota = policy.quota_for(ip)
    if quota is not None and st.count >= quota:
        if st.flagged_day != day:
            st.flagged_day = day
            state.events.append(DetectionEvent(DetectionKind.QUOTA_EXCEEDED, ip, t))
        return Deny(DenyReason.RATE_LIMITED, (day + 1) * DAY_MS - t)
    if state.run_ip != ip:
        state.run_ip, state.run_length = ip, 0
    token = getattr(ctx, "captcha_token", None)
    if token is not None and state.challenges.get(ip) == token:
        del state.challenges[ip]
        state.run_length = 0
    st.count += 1
    state.run_length += 1
    if policy.captcha_after is not None and state.run_length > policy.captcha_after:
        state.issued += 1
        cid = f"c{state.issued}"
        state.challenges[ip] = cid
        return Challenge(cid, policy.captcha_cost)
    return ALLOW


class Gatekeeper:
    """Thread-safe wrapper: the policy plus its shared state."""

    def __init__(self, policy: DefensePolicy):
        self.policy = policy
        self.state = DefenseState()
        self._lock = threading.Lock()

    def admit(self, ctx) -> Allow | Challenge | Deny:
        with self._lock:
            return admit(self.policy, self.state, ctx)

    @property
    def events(self) -> list[DetectionEvent]:
        return list(self.state.events)


@dataclass(frozen=True)
class Solved:
    cost: int


@dataclass(frozen=True)
class Failed:
    cost: int


def resolve_challenge(policy: DefensePolicy, challenge: Challenge, rng: random.Random) -> Solved | Failed:
    """Attacker-side cost model of one CAPTCHA attempt."""
    if rng.random() < policy.captcha_solve_probability:
        return Solved(challenge.cost)
    return Failed(challenge.cost)


# --- sanitisation ----------------------------------------------------------

_WORD = re.compile(r"[^\W\d_]+")


def _sanitize_name(text: str, n: int) -> str:
    words = _WORD.findall(text)
    if not words:
        return text
    if len(words) == 1:
        return f"{words[0][:n]}."
    return f"{words[0][0]}. {words[-1][:n]}."


def _mask(text: str, keep: int, mask: str) -> str:
    out, seen = [], 0
    for ch in text:
        if ch.isalnum():
            seen += 1
            out.append(ch if seen <= keep else mask)
        else:
            out.append(ch)
    return "".join(out)


def sanitize_document(policy: SanitizationPolicy | DefensePolicy, doc: Document) -> Document:
    """Rewrite annotated names to ``F. Surna.`` form and mask identifiers.

    Text outside annotation spans is copied unchanged; spans are re-based.
    """
    if isinstance(policy, DefensePolicy):
        policy = policy.sanitization
    pieces, notes = [], []
    cursor = shift = 0
    for a in sorted(doc.annotations, key=lambda a: a.start):
        pieces.append(doc.text[cursor : a.start])
        original = doc.text[a.start : a.end]
        if a.kind is AnnotationKind.FULL_NAME:
            new = _sanitize_name(original, policy.surname_length)
        else:
            new = _mask(original, policy.keep_prefix.get(a.kind, 0), policy.mask_char)
        pieces.append(new)
        start = a.start + shift
        shift += len(new) - len(original)
        notes.append(replace(a, start=start, end=start + len(new), sanitized=True))
        cursor = a.end
    pieces.append(doc.text[cursor:])
    return replace(doc, text="".join(pieces), annotations=tuple(notes))


# --- decoys and accountability ------------------------------------------------


def plant_decoys(world: World, n: int, seed: int) -> tuple[World, list[str]]:
    """Add ``n`` decoy persons; returns the new world and their bait TRNs."""
    from .population import plant_decoy_persons

    world, decoys = plant_decoy_persons(world, n, seed)
    return world, [p.trns[0].trn for p in decoys]


def _identifiers_in(item: Any) -> Iterable[str] | str:
    keys = getattr(item, "keys", None)
    if isinstance(keys, (set, frozenset)):
        return keys
    if isinstance(item, str):
        return item
    return json.dumps(item, ensure_ascii=False, default=str)


def detect_exfiltration(decoys: Iterable[str], attacker_output: Iterable[Any], time: int = 0) -> list[DetectionEvent]:
    """One event per distinct decoy identifier found in the attacker's output.

    ``attacker_output`` may hold profiles (matched on their identifier keys),
    strings such as exported report lines, or JSON-serialisable records.
    """
    baits = list(dict.fromkeys(decoys))
    found: set[str] = set()
    patterns = {b: re.compile(rf"(?<![0-9A-Za-z]){re.escape(b)}(?![0-9A-Za-z])") for b in baits}
    for item in attacker_output:
        ids = _identifiers_in(item)
        if isinstance(ids, str):
            # token match so a bait never fires inside a longer number
            found.update(b for b in baits if patterns[b].search(ids))
        else:
            found.update(b for b in baits if b in ids)
    return [DetectionEvent(DetectionKind.DECOY_EXFILTRATED, b, time) for b in baits if b in found]


def attribute_leaks(corpus: Iterable[Document]) -> dict[str, int]:
    """Count unsanitised identifiers per document author."""
    counts: dict[str, int] = {}
    for doc in corpus:
        n = sum(1 for a in doc.annotations if a.kind in IDENTIFIER_KINDS and not a.sanitized)
        counts[doc.metadata.author] = counts.get(doc.metadata.author, 0) + n
    return counts


def leaked_annotations(doc: Document) -> list[Annotation]:
    return [a for a in doc.annotations if a.kind in IDENTIFIER_KINDS and not a.sanitized]
