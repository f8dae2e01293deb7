"""Synthetic document repository and the anchor-based identifier miner.

Documents are rendered from data-file templates over persons of a world and
carry ground-truth annotations. The extractor sees only the published text:
it finds anchor strings such as ``ΑΔΤ``, reads the identifier next to them and
tries a few syntax patterns nearby to bind a name.
"""

from __future__ import annotations

import datetime as dt
import enum
import json
import random
import re
import string
import zlib
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, replace
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np

from .ident import HOMOGLYPHS, IdentifierFormatError, parse_id_card
from .model import Annotation, AnnotationKind, DocMetadata, Document, Person, PublishedDocument, World
from .population import CapacityError, WorldFileError, document_from_dict, document_to_dict
from .text import GREEK_UPPER, fold, title, to_greek

CORPUS_FORMAT = "civicleak-corpus"
CORPUS_VERSION = 1

_LATIN_OF = {v: k for k, v in HOMOGLYPHS.items()}


# --- templates ----------------------------------------------------------------


@dataclass(frozen=True)
class Template:
    name: str
    kind: str
    script: str
    rows: tuple[int, int]
    header: str
    row: str
    footer: str


@dataclass(frozen=True)
class TemplateSet:
    templates: tuple[Template, ...]
    authors: tuple[str, ...]
    organizations: tuple[str, ...]
    roles: tuple[str, ...]

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> TemplateSet:
        if data.get("version") != 1:
            raise ValueError(f"unsupported template file version {data.get('version')!r}")
        temps = tuple(
            Template(t["name"], t["kind"], t["script"], tuple(t["rows"]), t["header"], t["row"], t["footer"])
            for t in data["templates"]
        )
        for t in temps:
            if t.script not in ("latin", "greek") or not 1 <= t.rows[0] <= t.rows[1]:
                raise ValueError(f"bad template {t.name!r}")
            if "{anchor}" not in t.row or "{id}" not in t.row:
                raise ValueError(f"template {t.name!r} has no anchored ID slot")
        if not temps or not data["authors"]:
            raise ValueError("template file needs templates and authors")
        return cls(temps, tuple(data["authors"]), tuple(data["organizations"]), tuple(data["roles"]))

    @classmethod
    def load(cls, path: str | Path) -> TemplateSet:
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def restrict(self, scripts: Iterable[str]) -> TemplateSet:
        keep = tuple(t for t in self.templates if t.script in set(scripts))
        if not keep:
            raise ValueError("no template left for the requested scripts")
        return TemplateSet(keep, self.authors, self.organizations, self.roles)


@lru_cache(maxsize=1)
def bundled_templates() -> TemplateSet:
    text = resources.files("civicleak.data").joinpath("templates.json").read_text(encoding="utf-8")
    return TemplateSet.from_dict(json.loads(text))


# --- OCR noise ----------------------------------------------------------------

_CLASSES = (
    "0123456789",
    "ABCDEFGHIJKLMNOPQRSTUVWXYZ",
    "abcdefghijklmnopqrstuvwxyz",
    GREEK_UPPER,
    "αβγδεζηθικλμνξοπρστυφχψω",
)
_CLASS_OF = {ch: (cls, i) for cls in _CLASSES for i, ch in enumerate(cls)}


@dataclass(frozen=True)
class NoiseModel:
    """Character substitution within the same class (digit, Latin, Greek, case).

    Draws depend on ``seed`` and the document id but not on ``p``, so the
    characters corrupted at a lower ``p`` are always a subset of those
    corrupted at a higher one. ``p = 0`` is the identity.
    """

    p: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("substitution probability must lie in [0, 1]")

    def apply(self, text: str, key: str = "") -> str:
        if self.p == 0.0 or not text:
            return text
        rng = np.random.default_rng([self.seed & 0xFFFFFFFF, zlib.crc32(key.encode())])
        u = rng.random(len(text))
        shift = rng.integers(1, 1 << 30, len(text))
        out = list(text)
        for i in np.flatnonzero(u < self.p):
            hit = _CLASS_OF.get(out[i])
            if hit is not None:
                cls, k = hit
                out[i] = cls[(k + 1 + shift[i] % (len(cls) - 1)) % len(cls)]
        return "".join(out)


# --- generation ---------------------------------------------------------------


def _render_name(name: str, script: str) -> str:
    return title(name) if script == "latin" else title(to_greek(name))


def _render_card(card, script: str) -> str:
    letters = card.letters
    if script == "latin":
        letters = "".join(_LATIN_OF.get(c, c) for c in letters)
    return f"{letters}-{card.serial}"


class _Builder:
    """Accumulates text and records spans for annotated fields."""

    def __init__(self) -> None:
        self.parts: list[str] = []
        self.length = 0
        self.notes: list[Annotation] = []

    def fill(self, pattern: str, values: Mapping[str, str], person: Person | None = None,
             truths: Mapping[str, tuple[AnnotationKind, str]] | None = None) -> None:
        for literal, key, _, _ in _FORMATTER.parse(pattern):
            self._emit(literal)
            if key is None:
                continue
            text = values[key]
            if truths and key in truths and person is not None:
                kind, value = truths[key]
                self.notes.append(Annotation(self.length, self.length + len(text), kind, person.id, value))
            self._emit(text)

    def _emit(self, s: str) -> None:
        self.parts.append(s)
        self.length += len(s)

    def text(self) -> str:
        return "".join(self.parts)


_FORMATTER = string.Formatter()


def generate_corpus(world: World, count: int, *, seed: int = 0, templates: TemplateSet | None = None,
                    noise: NoiseModel | None = None, current_card_probability: float = 0.8,
                    include_decoys: bool = False) -> list[Document]:
    """Render ``count`` documents over randomly drawn persons of ``world``.

    Noise is applied after annotation, so spans keep pointing at the original
    truth while the text shows OCR damage.
    """
    templates = templates or bundled_templates()
    pool = [p for p in world.persons if include_decoys or not p.is_decoy]
    if count > 0 and not pool:
        raise CapacityError("cannot generate documents over an empty world")
    rng = random.Random(f"docminer/{seed}")
    docs = []
    for k in range(count):
        t = rng.choice(templates.templates)
        author = rng.choice(templates.authors)
        org = rng.choice(templates.organizations)
        year = rng.randint(2010, 2016)
        b = _Builder()
        b.fill(t.header, {"number": str(rng.randint(1, 9999)), "year": str(year), "org": org, "author": author})
        n_rows = rng.randint(*t.rows)
        for n, person in enumerate(rng.sample(pool, min(n_rows, len(pool))), start=1):
            card = person.current_card
            if len(person.id_cards) > 1 and rng.random() >= current_card_probability:
                card = rng.choice(person.id_cards[:-1])
            latin = t.script == "latin"
            female = person.sex.value == "F"
            values = {
                "n": str(n),
                "fullname": f"{_render_name(person.names.first, t.script)} {_render_name(person.names.last, t.script)}",
                "father": _render_name(person.names.father, t.script),
                "of": ("daughter of" if female else "son of") if latin else ("της" if female else "του"),
                "anchor": "ΑΔΤ",
                "id": _render_card(card, t.script),
                "trn": person.trns[0].trn,
                "amka": person.amka,
                "role": rng.choice(templates.roles),
                "amount": f"{rng.randint(400, 3000)}.{rng.randint(0, 99):02d}",
            }
            truths = {
                "fullname": (AnnotationKind.FULL_NAME, f"{person.names.first} {person.names.last}"),
                "id": (AnnotationKind.ID_CARD, str(card)),
                "trn": (AnnotationKind.TRN, person.trns[0].trn),
                "amka": (AnnotationKind.AMKA, person.amka),
            }
            b.fill(t.row, values, person, truths)
        b.fill(t.footer, {"author": author})
        doc_id = f"DOC{seed:04d}-{k:06d}"
        text = b.text()
        if noise is not None:
            text = noise.apply(text, doc_id)
        meta = DocMetadata(author, dt.date(year, rng.randint(1, 12), rng.randint(1, 28)), org)
        docs.append(Document(doc_id, text, meta, tuple(b.notes), t.name))
    return docs


def apply_noise(corpus: Sequence[Document], noise: NoiseModel) -> list[Document]:
    """Re-noise an already generated corpus; annotations are untouched."""
    return [replace(d, text=noise.apply(d.text, d.id)) for d in corpus]


def save_corpus(corpus: Sequence[Document], path: str | Path) -> None:
    lines = [json.dumps({"format": CORPUS_FORMAT, "version": CORPUS_VERSION, "documents": len(corpus)})]
    lines += [json.dumps(document_to_dict(d), ensure_ascii=False, separators=(",", ":")) for d in corpus]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_corpus(path: str | Path) -> list[Document]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise WorldFileError("empty corpus file")
    head = json.loads(lines[0])
    if head.get("format") != CORPUS_FORMAT or head.get("version") != CORPUS_VERSION:
        raise WorldFileError(f"unsupported corpus header {head!r}")
    docs = [document_from_dict(json.loads(line)) for line in lines[1:]]
    if len(docs) != head["documents"]:
        raise WorldFileError(f"corpus truncated: {len(docs)} of {head['documents']} documents")
    return docs


# --- extraction ---------------------------------------------------------------


class Confidence(enum.Enum):
    ANCHOR_ONLY = "anchor-only"
    ANCHOR_PLUS_NAME = "anchor-plus-name"


@dataclass(frozen=True)
class ExtractedName:
    first: str
    last: str
    father: str | None = None

    @property
    def key(self) -> str:
        return f"{self.first} {self.last}"


@dataclass(frozen=True)
class ExtractionHit:
    doc_id: str
    kind: AnnotationKind
    value: str  # normalised identifier
    start: int
    end: int
    line: int
    confidence: Confidence
    name: ExtractedName | None = None

    @property
    def id_card(self):
        return parse_id_card(self.value) if self.kind is AnnotationKind.ID_CARD else None


_NAME_WORD = r"[A-ZΑ-Ω][a-zα-ω]+"
_BOUNDARY = r"(?<![^\W\d_])"

# Each pattern matches text on one side of the anchored identifier:
# "before" patterns end where the anchor starts, "after" ones begin where the
# identifier ends. {name} binds "First Last", {word} a father's name.
DEFAULT_SYNTAX_PATTERNS: tuple[tuple[str, str], ...] = (
    ("before", r"{name},? (?:son|daughter) of {word},? with $"),
    ("before", r"{name} (?:του|της) {word},? $"),
    ("before", r"{name},? (?:with )?$"),
    ("after", r"^,?\s+{name}(?: (?:του|της|son of|daughter of) {word})?"),
)

_ID_SHAPES = {
    AnnotationKind.ID_CARD: r"([A-ZΑ-Ω]{1,2})[-\s]?(\d{6})(?!\d)",
    AnnotationKind.TRN: r"(\d{9})(?!\d)",
    AnnotationKind.AMKA: r"(\d{11})(?!\d)",
}


@dataclass(frozen=True)
class ExtractorConfig:
    anchors: tuple[str, ...] = ("ΑΔΤ",)
    # Extra anchors for the other numeric identifiers; empty to mine ID cards only.
    identifier_anchors: tuple[tuple[str, AnnotationKind], ...] = (
        ("ΑΦΜ", AnnotationKind.TRN),
        ("ΑΜΚΑ", AnnotationKind.AMKA),
    )
    window: int = 120
    direction: str = "after"  # where the ID sits relative to its anchor: after | before | both
    syntax_patterns: tuple[tuple[str, str], ...] = DEFAULT_SYNTAX_PATTERNS

    def __post_init__(self) -> None:
        if self.window <= 0:
            raise ValueError("window must be positive")
        if not self.anchors:
            raise ValueError("at least one anchor is required")
        if self.direction not in ("after", "before", "both"):
            raise ValueError(f"unknown direction {self.direction!r}")
        for side, _ in self.syntax_patterns:
            if side not in ("before", "after"):
                raise ValueError(f"unknown pattern side {side!r}")

    @property
    def anchor_kinds(self) -> dict[str, AnnotationKind]:
        kinds = {a: AnnotationKind.ID_CARD for a in self.anchors}
        kinds.update(dict(self.identifier_anchors))
        return kinds


@lru_cache(maxsize=32)
def _compiled(cfg: ExtractorConfig):
    kinds = cfg.anchor_kinds
    anchor_re = re.compile(
        _BOUNDARY + "(" + "|".join(re.escape(a) for a in sorted(kinds, key=len, reverse=True)) + r")(?![^\W\d_])"
    )
    after = {k: re.compile(r"^[\s:.,]{0,3}" + _BOUNDARY + s) for k, s in _ID_SHAPES.items()}
    before = {k: re.compile(_BOUNDARY + s + r"[\s:.,()]{0,3}$") for k, s in _ID_SHAPES.items()}
    name = f"{_BOUNDARY}(?P<first>{_NAME_WORD}) (?P<last>{_NAME_WORD})"
    word = f"(?P<father>{_NAME_WORD})"
    syntax = tuple(
        (side, re.compile(p.replace("{name}", name).replace("{word}", word))) for side, p in cfg.syntax_patterns
    )
    return kinds, anchor_re, after, before, syntax


def _normalise(kind: AnnotationKind, m: re.Match) -> str | None:
    if kind is AnnotationKind.ID_CARD:
        try:
            return str(parse_id_card(m.group(1) + m.group(2)))
        except IdentifierFormatError:
            return None
    return m.group(1)


def _bind_name(text: str, a_start: int, id_end: int, window: int, syntax) -> ExtractedName | None:
    for side, rx in syntax:
        if side == "before":
            m = rx.search(text, max(0, a_start - window), a_start)
        else:
            m = rx.search(text[id_end : id_end + window])
        if m:
            father = m.groupdict().get("father")
            return ExtractedName(fold(m["first"]), fold(m["last"]), fold(father) if father else None)
    return None


def extract_pii(doc: Document | PublishedDocument, config: ExtractorConfig | None = None) -> list[ExtractionHit]:
    """Scan one document; total on any text."""
    cfg = config or ExtractorConfig()
    kinds, anchor_re, after, before, syntax = _compiled(cfg)
    text = doc.text
    hits = []
    for am in anchor_re.finditer(text):
        kind = kinds[am.group(1)]
        found = None
        if cfg.direction in ("after", "both"):
            m = after[kind].match(text[am.end() : am.end() + 16])
            if m:
                found = (m, am.end() + m.start(1), am.end() + m.end(m.re.groups))
        if found is None and cfg.direction in ("before", "both"):
            lo = max(0, am.start() - 16)
            m = before[kind].search(text[lo : am.start()])
            if m:
                found = (m, lo + m.start(1), lo + m.end(m.re.groups))
        if found is None:
            continue
        m, start, end = found
        value = _normalise(kind, m)
        if value is None:
            continue
        name = None
        if kind is AnnotationKind.ID_CARD:
            name = _bind_name(text, min(am.start(), start), max(end, am.end()), cfg.window, syntax)
        conf = Confidence.ANCHOR_PLUS_NAME if name else Confidence.ANCHOR_ONLY
        hits.append(ExtractionHit(doc.id, kind, value, start, end, text.count("\n", 0, start), conf, name))
    return hits


def extract_corpus(corpus: Iterable[Document | PublishedDocument], config: ExtractorConfig | None = None
                   ) -> list[ExtractionHit]:
    return [h for d in corpus for h in extract_pii(d, config)]


# --- scoring ------------------------------------------------------------------


@dataclass(frozen=True)
class KindScore:
    precision: float
    recall: float
    true_positives: int
    extracted: int
    expected: int


@dataclass(frozen=True)
class ExtractionReport:
    by_kind: dict[AnnotationKind, KindScore]
    name_binding_accuracy: float
    name_bound: int

    def __getitem__(self, kind: AnnotationKind) -> KindScore:
        return self.by_kind[kind]


def evaluate_extraction(corpus: Iterable[Document], hits: Iterable[ExtractionHit],
                        world: World | None = None) -> ExtractionReport:
    """Precision/recall over (document, identifier) pairs, per identifier kind.

    Name binding is scored on true-positive ID-card hits that carry a name:
    the bound ``FIRST LAST`` must equal the annotated person's name. With no
    hits at all precision is reported as 1.0.
    """
    truth: dict[AnnotationKind, set[tuple[str, str]]] = {k: set() for k in _ID_SHAPES}
    owner: dict[tuple[str, str], set[str]] = {}
    names: dict[str, str] = {}
    for d in corpus:
        for a in d.annotations:
            if a.kind is AnnotationKind.FULL_NAME:
                names[a.person_id] = a.value
            else:
                truth[a.kind].add((d.id, a.value))
                owner.setdefault((d.id, a.value), set()).add(a.person_id)
    if world is not None:
        names.update({p.id: f"{p.names.first} {p.names.last}" for p in world.persons})
    got: dict[AnnotationKind, set[tuple[str, str]]] = {k: set() for k in _ID_SHAPES}
    bound = correct = 0
    for h in hits:
        got[h.kind].add((h.doc_id, h.value))
        if h.kind is AnnotationKind.ID_CARD and h.name is not None and (h.doc_id, h.value) in owner:
            bound += 1
            correct += any(names.get(pid) == h.name.key for pid in owner[(h.doc_id, h.value)])
    scores = {}
    for kind in _ID_SHAPES:
        tp = len(got[kind] & truth[kind])
        scores[kind] = KindScore(
            precision=tp / len(got[kind]) if got[kind] else 1.0,
            recall=tp / len(truth[kind]) if truth[kind] else 0.0,
            true_positives=tp,
            extracted=len(got[kind]),
            expected=len(truth[kind]),
        )
    return ExtractionReport(scores, correct / bound if bound else 0.0, bound)


# --- hit files ------------------------------------------------------------------

HITS_FORMAT = "civicleak-hits"


def hit_to_dict(h: ExtractionHit) -> dict[str, Any]:
    return {
        "doc_id": h.doc_id, "kind": h.kind.value, "value": h.value, "start": h.start, "end": h.end,
        "line": h.line, "confidence": h.confidence.value,
        "name": None if h.name is None else {"first": h.name.first, "last": h.name.last, "father": h.name.father},
    }


def hit_from_dict(d: Mapping[str, Any]) -> ExtractionHit:
    n = d.get("name")
    return ExtractionHit(d["doc_id"], AnnotationKind(d["kind"]), d["value"], d["start"], d["end"], d["line"],
                         Confidence(d["confidence"]), ExtractedName(**n) if n else None)


def save_hits(hits: Iterable[ExtractionHit], path: str | Path) -> None:
    lines = [json.dumps({"format": HITS_FORMAT, "version": 1})]
    lines += [json.dumps(hit_to_dict(h), ensure_ascii=False, separators=(",", ":")) for h in hits]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_hits(path: str | Path) -> list[ExtractionHit]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    head = json.loads(lines[0]) if lines else {}
    if head.get("format") != HITS_FORMAT or head.get("version") != 1:
        raise WorldFileError(f"unsupported hits header {head!r}")
    return [hit_from_dict(json.loads(line)) for line in lines[1:] if line.strip()]
