"""Plain record types shared across the simulator."""

from __future__ import annotations

import datetime as dt
import enum
from dataclasses import dataclass
from functools import cached_property
from typing import TYPE_CHECKING

from .ident import IdCardNumber, Sex, TrnCategory

if TYPE_CHECKING:
    from .population import PopulationConfig
    from .registry import WorldIndex


@dataclass(frozen=True)
class NameTriple:
    first: str
    last: str
    father: str

    def __post_init__(self) -> None:
        for part in (self.first, self.last, self.father):
            if len(part) < 2:
                raise ValueError(f"name component too short: {part!r}")


@dataclass(frozen=True)
class Address:
    street: str
    number: str
    postal_code: str
    city: str


class BusinessIndicator(enum.Enum):
    BUSINESS = "business"
    EX_BUSINESS = "ex-business"


@dataclass(frozen=True)
class BusinessInfo:
    """Table-style business metadata published for disclosed tax numbers."""

    commercial_title: str
    address: Address
    registration_date: dt.date
    stop_date: dt.date | None
    phone: str
    fax: str
    activity: str
    physical_entity: bool
    tax_bureau: str

    @property
    def indicator(self) -> BusinessIndicator:
        return BusinessIndicator.EX_BUSINESS if self.stop_date else BusinessIndicator.BUSINESS


@dataclass(frozen=True)
class TrnAssignment:
    trn: str
    category: TrnCategory
    active: bool
    business: BusinessInfo | None = None

    def __post_init__(self) -> None:
        if (self.category is TrnCategory.CATEGORY2) != (self.business is not None):
            raise ValueError("business metadata must be present exactly for category 2")


@dataclass(frozen=True)
class Person:
    id: str
    names: NameTriple
    mother: str
    dob: dt.date
    sex: Sex
    trns: tuple[TrnAssignment, ...]
    id_cards: tuple[IdCardNumber, ...]  # current card last
    amka: str
    electoral_center: str
    registrar_info: str
    is_decoy: bool = False

    @property
    def current_card(self) -> IdCardNumber:
        return self.id_cards[-1]

    @property
    def category2(self) -> bool:
        return any(t.category is TrnCategory.CATEGORY2 for t in self.trns)


class AnnotationKind(enum.Enum):
    FULL_NAME = "full-name"
    ID_CARD = "id-card"
    TRN = "trn"
    AMKA = "amka"


IDENTIFIER_KINDS = (AnnotationKind.ID_CARD, AnnotationKind.TRN, AnnotationKind.AMKA)


@dataclass(frozen=True)
class Annotation:
    """Ground-truth span in a document. ``value`` is the canonical truth
    (normalised identifier, or ``FIRST LAST`` for names)."""

    start: int
    end: int
    kind: AnnotationKind
    person_id: str
    value: str
    sanitized: bool = False


@dataclass(frozen=True)
class DocMetadata:
    author: str
    modification_date: dt.date
    publishing_org: str


@dataclass(frozen=True)
class Document:
    id: str
    text: str
    metadata: DocMetadata
    annotations: tuple[Annotation, ...] = ()
    template: str = ""

    def published(self) -> PublishedDocument:
        return PublishedDocument(self.id, self.text, self.metadata)


@dataclass(frozen=True)
class PublishedDocument:
    """What the repository hands out: no ground-truth annotations."""

    id: str
    text: str
    metadata: DocMetadata


@dataclass(frozen=True)
class World:
    config: PopulationConfig
    persons: tuple[Person, ...]
    documents: tuple[Document, ...] = ()
    format_version: int = 1

    @property
    def amka_pivot(self) -> int:
        return self.config.amka_pivot

    @cached_property
    def index(self) -> WorldIndex:
        from .registry import WorldIndex

        return WorldIndex(self)

    @cached_property
    def by_id(self) -> dict[str, Person]:
        return {p.id: p for p in self.persons}
