"""In-process mock government services over a synthetic world.

Each call takes a :class:`RequestContext` and returns either a success value
or a :class:`ServiceError`. Errors are values, not exceptions: most brute-force
probes fail, and the failure kind is itself what the attacker learns.
"""

from __future__ import annotations

import datetime as dt
import enum
from collections import defaultdict
from dataclasses import dataclass

from .defense import Challenge, DefensePolicy, Deny, DenyReason, Gatekeeper
from .ident import IdCardNumber, TrnCategory, trn_validate
from .model import Address, BusinessIndicator, Person, PublishedDocument, TrnAssignment, World
from .text import fold


@dataclass(frozen=True)
class RequestContext:
    source_ip: str
    time: int  # simulated ms, non-decreasing per source
    session_id: str | None = None
    captcha_token: str | None = None


class ErrorKind(enum.Enum):
    UNREGISTERED = "unregistered"
    CATEGORY1_REFUSAL = "category1-refusal"
    INVALID_FORMAT = "invalid-format"
    NOT_FOUND = "not-found"
    NEEDS_MORE_INFO = "needs-more-info"
    RATE_LIMITED = "rate-limited"
    CAPTCHA_REQUIRED = "captcha-required"
    LOCKED_OUT = "locked-out"

    __hash__ = object.__hash__  # identity hash; members are singletons


DEFENSE_KINDS = frozenset({ErrorKind.RATE_LIMITED, ErrorKind.CAPTCHA_REQUIRED, ErrorKind.LOCKED_OUT})


@dataclass(frozen=True)
class ServiceError:
    kind: ErrorKind
    retry_after: int | None = None
    challenge: Challenge | None = None
    detail: str = ""

    @property
    def is_defense(self) -> bool:
        return self.kind in DEFENSE_KINDS


UNREGISTERED = ServiceError(ErrorKind.UNREGISTERED)
CATEGORY1_REFUSAL = ServiceError(ErrorKind.CATEGORY1_REFUSAL)
NOT_FOUND = ServiceError(ErrorKind.NOT_FOUND)
NEEDS_MORE_INFO = ServiceError(ErrorKind.NEEDS_MORE_INFO)


def invalid(detail: str) -> ServiceError:
    return ServiceError(ErrorKind.INVALID_FORMAT, detail=detail)


@dataclass(frozen=True)
class TrnRecord:
    trn: str
    last_name: str
    first_name: str
    father_name: str
    commercial_title: str
    address: Address
    registration_date: dt.date
    stop_date: dt.date | None
    phone: str
    fax: str
    business_activity: str
    physical_entity: bool
    tax_bureau: str
    active_trn: bool
    business_indicator: BusinessIndicator

    @classmethod
    def of(cls, person: Person, t: TrnAssignment) -> TrnRecord:
        b = t.business
        assert b is not None
        return cls(
            trn=t.trn,
            last_name=person.names.last,
            first_name=person.names.first,
            father_name=person.names.father,
            commercial_title=b.commercial_title,
            address=b.address,
            registration_date=b.registration_date,
            stop_date=b.stop_date,
            phone=b.phone,
            fax=b.fax,
            business_activity=b.activity,
            physical_entity=b.physical_entity,
            tax_bureau=b.tax_bureau,
            active_trn=t.active,
            business_indicator=b.indicator,
        )


TABLE1_FIELDS = tuple(TrnRecord.__dataclass_fields__)


@dataclass(frozen=True)
class VoterResult:
    electoral_center: str
    registrar_info: str
    mother_name: str
    birth_year: int


@dataclass(frozen=True)
class _Folded:
    person: Person
    first: str
    last: str
    father: str
    mother: str


class WorldIndex:
    """Lookup structures for every service, built once per world."""

    def __init__(self, world: World):
        self.trn: dict[str, tuple[Person, TrnAssignment]] = {}
        self.voter: dict[tuple[str, int], list[_Folded]] = defaultdict(list)
        self.amka_names: dict[tuple[str, str, str, str], list[Person]] = defaultdict(list)
        self.by_amka: dict[str, Person] = {}
        self.by_card: dict[IdCardNumber, Person] = {}
        for p in world.persons:
            f = _Folded(p, fold(p.names.first), fold(p.names.last), fold(p.names.father), fold(p.mother))
            for t in p.trns:
                self.trn[t.trn] = (p, t)
            self.voter[(f.last, p.dob.year)].append(f)
            self.amka_names[(f.first, f.last, f.father, f.mother)].append(p)
            self.by_amka[p.amka] = p
            for c in p.id_cards:
                self.by_card[c] = p
        self.voter = dict(self.voter)
        self.amka_names = dict(self.amka_names)
        self.documents = {d.id: d for d in world.documents}
        self.doc_order = [d.id for d in world.documents]


class Registry:
    """The four public services over one world, optionally defended.

    ``voter_mode`` is ``"strict"`` (ambiguous voter matches are NotFound) or
    ``"first-match"``.
    """

    def __init__(self, world: World, policy: DefensePolicy | None = None, voter_mode: str = "strict"):
        if voter_mode not in ("strict", "first-match"):
            raise ValueError(f"unknown voter_mode {voter_mode!r}")
        self.world = world
        self.index = world.index
        self.voter_mode = voter_mode
        self.policy = policy
        self.gate = Gatekeeper(policy) if policy is not None and policy.gates_requests else None

    @property
    def detection_events(self):
        return self.gate.events if self.gate else []

    def _screen(self, ctx: RequestContext) -> ServiceError | None:
        if self.gate is None:
            return None
        decision = self.gate.admit(ctx)
        if isinstance(decision, Deny):
            kind = ErrorKind.RATE_LIMITED if decision.reason is DenyReason.RATE_LIMITED else ErrorKind.LOCKED_OUT
            return ServiceError(kind, retry_after=decision.retry_after)
        if isinstance(decision, Challenge):
            return ServiceError(ErrorKind.CAPTCHA_REQUIRED, challenge=decision)
        return None

    # -- tax registration numbers --

    def trn_lookup(self, ctx: RequestContext, trn: str) -> TrnRecord | ServiceError:
        rejected = self._screen(ctx)
        if rejected:
            return rejected
        if not trn_validate(trn):
            return invalid("not a valid TRN")
        hit = self.index.trn.get(trn)
        if hit is None:
            return UNREGISTERED
        person, assignment = hit
        if assignment.category is TrnCategory.CATEGORY1:
            return CATEGORY1_REFUSAL
        return TrnRecord.of(person, assignment)

    # -- voter registration --

    def voter_search(self, ctx: RequestContext, first_prefix: str, last_name: str,
                     father_prefix: str, mother_prefix: str, birth_year: int) -> VoterResult | ServiceError:
        rejected = self._screen(ctx)
        if rejected:
            return rejected
        fp, fa, mo, last = fold(first_prefix), fold(father_prefix), fold(mother_prefix), fold(last_name)
        if len(fp) < 2 or len(fa) < 2 or len(mo) < 2:
            return invalid("first, father and mother names need at least two letters")
        if not last:
            return invalid("last name is required")
        if isinstance(birth_year, bool) or not isinstance(birth_year, int):
            return invalid("birth year must be an integer")
        matches = [
            f for f in self.index.voter.get((last, birth_year), ())
            if f.first.startswith(fp) and f.father.startswith(fa) and f.mother.startswith(mo)
        ]
        if not matches or (len(matches) > 1 and self.voter_mode == "strict"):
            return NOT_FOUND
        p = matches[0].person
        return VoterResult(p.electoral_center, p.registrar_info, p.mother, p.dob.year)

    # -- social security numbers --

    def amka_search(self, ctx: RequestContext, first_name: str, last_name: str, father_name: str,
                    mother_name: str, dob: dt.date | int, trn: str | None = None,
                    id_card: str | None = None) -> str | ServiceError:
        rejected = self._screen(ctx)
        if rejected:
            return rejected
        key = (fold(first_name), fold(last_name), fold(father_name), fold(mother_name))
        if not all(key):
            return invalid("all four names are required")
        candidates = self.index.amka_names.get(key, ())
        if isinstance(dob, dt.date):
            found = [p for p in candidates if p.dob == dob]
            return found[0].amka if len(found) == 1 else NOT_FOUND
        if isinstance(dob, bool) or not isinstance(dob, int):
            return invalid("date of birth must be a full date or a year")
        found = [p for p in candidates if p.dob.year == dob]
        if len(found) != 1:
            return NOT_FOUND
        p = found[0]
        if trn is None and id_card is None:
            return NEEDS_MORE_INFO
        if trn is not None and any(t.trn == trn for t in p.trns):
            return p.amka
        if id_card is not None and any(str(c) == id_card.replace("-", "").replace(" ", "") for c in p.id_cards):
            return p.amka
        return NOT_FOUND

    # -- document repository --

    def doc_search(self, ctx: RequestContext, term: str) -> list[str] | ServiceError:
        rejected = self._screen(ctx)
        if rejected:
            return rejected
        if not term:
            return invalid("search term is empty")
        docs = self.index.documents
        return [i for i in self.index.doc_order if term in docs[i].text]

    def doc_fetch(self, ctx: RequestContext, doc_id: str) -> PublishedDocument | ServiceError:
        rejected = self._screen(ctx)
        if rejected:
            return rejected
        doc = self.index.documents.get(doc_id)
        return doc.published() if doc is not None else NOT_FOUND
