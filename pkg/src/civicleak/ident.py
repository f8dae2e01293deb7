"""National identifier schemes: tax numbers, social security numbers, ID cards,
plus structural parsers for a handful of foreign formats."""

from __future__ import annotations

import datetime as dt
import enum
import re
import zlib
from collections.abc import Iterable, Iterator, Mapping
from dataclasses import dataclass

import numpy as np

from .text import GREEK_UPPER

DIGIT_PARTITIONS = tuple("0123456789")
PRIORITY_PREFIXES = ("0", "1", "2", "99")
TRN_WEIGHTS = (256, 128, 64, 32, 16, 8, 4, 2)


class IdentifierFormatError(ValueError):
    """Raised when an identifier does not have the expected shape."""


class TrnCategory(enum.Enum):
    CATEGORY1 = "category1"  # wage earners and pensioners, never disclosed
    CATEGORY2 = "category2"  # self-employed and legal entities, disclosed


class Sex(enum.Enum):
    MALE = "M"
    FEMALE = "F"


# --- tax registration numbers ------------------------------------------------


def trn_guard_digit(prefix: str) -> int:
    if len(prefix) != 8 or not prefix.isascii() or not prefix.isdigit():
        raise IdentifierFormatError(f"TRN prefix must be 8 decimal digits, got {prefix!r}")
    total = sum(int(d) * w for d, w in zip(prefix, TRN_WEIGHTS))
    return total % 11 % 10


def trn_validate(candidate: object) -> bool:
    if not isinstance(candidate, str) or len(candidate) != 9:
        return False
    if not candidate.isascii() or not candidate.isdigit():
        return False
    return trn_guard_digit(candidate[:8]) == int(candidate[8])


def trn_complete(prefix: str) -> str:
    return prefix + str(trn_guard_digit(prefix))


def guard_digits(prefixes: np.ndarray) -> np.ndarray:
    """Vectorised guard digits for integer 8-digit prefixes."""
    p = np.asarray(prefixes, dtype=np.int64)
    total = np.zeros_like(p)
    for pos, weight in enumerate(TRN_WEIGHTS):
        digit = (p // 10 ** (7 - pos)) % 10
        total += digit * weight
    return total % 11 % 10


def trn_at(index: int, exponent: int = 8) -> str:
    """The valid TRN at position ``index`` of a 10**exponent space.

    The index fills the leading ``exponent`` digits of the 8-digit prefix; the
    remaining prefix digits are zero.
    """
    if not 0 <= index < 10**exponent:
        raise IdentifierFormatError(f"index {index} outside a 10^{exponent} space")
    return trn_complete(f"{index * 10 ** (8 - exponent):08d}")


def trn_index(trn: str, exponent: int = 8) -> int:
    """Inverse of :func:`trn_at`; raises if the TRN lies outside the space."""
    if not trn_validate(trn):
        raise IdentifierFormatError(f"invalid TRN {trn!r}")
    head, tail = trn[:exponent], trn[exponent:8]
    if tail.strip("0"):
        raise IdentifierFormatError(f"TRN {trn} is outside a 10^{exponent} space")
    return int(head)


@dataclass(frozen=True)
class EnumerationSpace:
    """A set of first-digit partitions of the TRN space plus an ordering policy.

    A partition is a digit prefix. Overlapping prefixes (``"9"`` and ``"99"``)
    are resolved by assigning each number to the longest listed prefix, so
    every valid TRN is produced at most once.
    """

    exponent: int = 8
    partitions: tuple[str, ...] = DIGIT_PARTITIONS
    ordering: str = "sequential"  # "permutation" shuffles within partitions, "global" across all
    seed: int = 0

    def __post_init__(self) -> None:
        if not 1 <= self.exponent <= 8:
            raise IdentifierFormatError("exponent must be between 1 and 8")
        if self.ordering not in ("sequential", "permutation", "global"):
            raise IdentifierFormatError(f"unknown ordering {self.ordering!r}")
        if len(set(self.partitions)) != len(self.partitions):
            raise IdentifierFormatError("duplicate partition prefix")
        for p in self.partitions:
            if not p or not p.isdigit() or len(p) > self.exponent:
                raise IdentifierFormatError(f"bad partition prefix {p!r}")

    @classmethod
    def prioritized(cls, exponent: int = 8, priority: Iterable[str] = PRIORITY_PREFIXES,
                    **kwargs) -> EnumerationSpace:
        """Priority prefixes first, then the remaining first digits."""
        priority = tuple(priority)
        rest = tuple(d for d in DIGIT_PARTITIONS if d not in priority)
        return cls(exponent=exponent, partitions=priority + rest, **kwargs)

    @classmethod
    def without_leading_zero(cls, exponent: int = 8, **kwargs) -> EnumerationSpace:
        """Nine first-digit partitions; 9*10^7 numbers at full scale."""
        return cls(exponent=exponent, partitions=DIGIT_PARTITIONS[1:], **kwargs)

    @property
    def size(self) -> int:
        return 10**self.exponent

    def intervals(self, prefix: str) -> list[tuple[int, int]]:
        """Half-open index intervals owned by ``prefix`` after overlap removal."""
        k = self.exponent
        scale = 10 ** (k - len(prefix))
        lo, hi = int(prefix) * scale, (int(prefix) + 1) * scale
        holes = sorted(
            (int(q) * 10 ** (k - len(q)), (int(q) + 1) * 10 ** (k - len(q)))
            for q in self.partitions
            if len(q) > len(prefix) and q.startswith(prefix)
        )
        out = []
        cursor = lo
        for a, b in holes:
            if a > cursor:
                out.append((cursor, a))
            cursor = max(cursor, b)
        if cursor < hi:
            out.append((cursor, hi))
        return out

    def partition_size(self, prefix: str) -> int:
        return sum(b - a for a, b in self.intervals(prefix))

    def __len__(self) -> int:
        return sum(self.partition_size(p) for p in self.partitions)

    def __iter__(self) -> Iterator[str]:
        return trn_enumerate(self)

    def indices(self, prefix: str) -> np.ndarray:
        idx = np.concatenate(
            [np.arange(a, b, dtype=np.int64) for a, b in self.intervals(prefix)]
            or [np.empty(0, dtype=np.int64)]
        )
        if self.ordering == "permutation" and len(idx):
            rng = np.random.default_rng([self.seed & 0xFFFFFFFF, zlib.crc32(prefix.encode())])
            idx = idx[rng.permutation(len(idx))]
        return idx


def _index_blocks(space: EnumerationSpace) -> Iterator[np.ndarray]:
    if space.ordering != "global":
        for prefix in space.partitions:
            yield space.indices(prefix)
        return
    plain = EnumerationSpace(space.exponent, space.partitions)
    idx = np.concatenate([plain.indices(p) for p in space.partitions] or [np.empty(0, dtype=np.int64)])
    rng = np.random.default_rng([space.seed & 0xFFFFFFFF, 0x9E3779B9])
    yield idx[rng.permutation(len(idx))]


def trn_enumerate(space: EnumerationSpace, chunk: int = 65536) -> Iterator[str]:
    shift = 10 ** (8 - space.exponent)
    for idx in _index_blocks(space):
        for start in range(0, len(idx), chunk):
            prefixes = idx[start : start + chunk] * shift
            full = prefixes * 10 + guard_digits(prefixes)
            for value in full.tolist():
                yield f"{value:09d}"


# --- social security numbers (AMKA) --------------------------------------------


DEFAULT_PIVOT = 20


def amka_year(yy: int, pivot: int = DEFAULT_PIVOT) -> int:
    return 1900 + yy if yy >= pivot else 2000 + yy


def amka_compose(dob: dt.date, sequence: int, sex: Sex,
                 taken: Iterable[str] = (), pivot: int = DEFAULT_PIVOT) -> str:
    """Build an 11-digit AMKA.

    The final digit is the lowest digit of the right parity (odd for men)
    that does not collide with a number in ``taken`` sharing the first ten
    digits.
    """
    if not isinstance(dob, dt.date):
        raise IdentifierFormatError(f"dob must be a date, got {dob!r}")
    if amka_year(dob.year % 100, pivot) != dob.year:
        raise IdentifierFormatError(f"{dob} is outside the century window for pivot {pivot}")
    if not 0 <= sequence <= 9999:
        raise IdentifierFormatError(f"sequence {sequence} out of range")
    head = f"{dob.day:02d}{dob.month:02d}{dob.year % 100:02d}{sequence:04d}"
    used = {a for a in taken if a[:10] == head}
    for digit in range(1 if sex is Sex.MALE else 0, 10, 2):
        if head + str(digit) not in used:
            return head + str(digit)
    raise IdentifierFormatError(f"no free {sex.name.lower()} digit left for {head}")


def amka_infer(amka: str, pivot: int = DEFAULT_PIVOT) -> tuple[dt.date, Sex]:
    if not isinstance(amka, str) or len(amka) != 11 or not amka.isascii() or not amka.isdigit():
        raise IdentifierFormatError(f"AMKA must be 11 decimal digits, got {amka!r}")
    day, month, yy = int(amka[0:2]), int(amka[2:4]), int(amka[4:6])
    try:
        dob = dt.date(amka_year(yy, pivot), month, day)
    except ValueError as exc:
        raise IdentifierFormatError(f"AMKA {amka} embeds no valid date: {exc}") from None
    sex = Sex.MALE if int(amka[10]) % 2 else Sex.FEMALE
    return dob, sex


def amka_validate(amka: object, pivot: int = DEFAULT_PIVOT) -> bool:
    try:
        amka_infer(amka, pivot)  # type: ignore[arg-type]
    except IdentifierFormatError:
        return False
    return True


# --- identity cards ---------------------------------------------------------

# Latin capitals that print identically to a Greek capital.
HOMOGLYPHS = dict(zip("ABEHIKMNOPTXYZ", "ΑΒΕΗΙΚΜΝΟΡΤΧΥΖ"))
_ID_RE = re.compile(r"^([^\W\d_]{1,2})[-\s]?(\d{6})$")


@dataclass(frozen=True, order=True)
class IdCardNumber:
    letters: str
    serial: str

    def __post_init__(self) -> None:
        if not 1 <= len(self.letters) <= 2 or any(c not in GREEK_UPPER for c in self.letters):
            raise IdentifierFormatError(f"bad ID card letters {self.letters!r}")
        if len(self.serial) != 6 or not self.serial.isdigit():
            raise IdentifierFormatError(f"bad ID card serial {self.serial!r}")

    def __str__(self) -> str:
        return self.letters + self.serial

    def render(self, sep: str = "-") -> str:
        return f"{self.letters}{sep}{self.serial}"


def parse_id_card(text: str) -> IdCardNumber:
    """Normalise ``AB-123456``, ``AB 123456`` or ``AB123456`` to an IdCardNumber.

    Latin look-alike capitals are folded to their Greek twins.
    """
    m = _ID_RE.match(text.strip())
    if not m:
        raise IdentifierFormatError(f"not an ID card number: {text!r}")
    letters = "".join(HOMOGLYPHS.get(c, c) for c in m.group(1))
    return IdCardNumber(letters, m.group(2))


# --- foreign schemes ----------------------------------------------------------


class ForeignScheme(enum.Enum):
    SSN_US = "ssn-us"
    NRIC_MY = "nric-my"
    NRIC_SG = "nric-sg"
    PAN_IN = "pan-in"


@dataclass(frozen=True)
class SsnParts:
    area: str
    group: str
    serial: str
    region: str | None = None


@dataclass(frozen=True)
class NricMyParts:
    dob: dt.date
    birthplace_code: str
    sex: Sex


@dataclass(frozen=True)
class ShapeValid:
    scheme: ForeignScheme
    value: str


# Shapes: d = digit, L = ASCII capital, anything else is a literal character.
_SHAPES = {
    ForeignScheme.SSN_US: "ddd-dd-dddd",
    ForeignScheme.NRIC_MY: "dddddd-dd-dddd",
    ForeignScheme.NRIC_SG: "#dddddddL",
    ForeignScheme.PAN_IN: "LLLLLddddL",
}
_CLASS_NAMES = {"d": "a digit", "L": "a capital letter", "#": "one of S, F, T, G"}


def _check_shape(shape: str, value: str) -> None:
    if len(value) != len(shape):
        raise IdentifierFormatError(f"length: expected {len(shape)} characters, got {len(value)}")
    for pos, (want, got) in enumerate(zip(shape, value)):
        if want == "d":
            ok = got.isascii() and got.isdigit()
        elif want == "L":
            ok = "A" <= got <= "Z"
        elif want == "#":
            ok = got in "SFTG"
        else:
            ok = got == want
        if not ok:
            expected = _CLASS_NAMES.get(want, repr(want))
            raise IdentifierFormatError(f"position {pos}: expected {expected}, got {got!r}")


def foreign_parse(scheme: ForeignScheme, value: str, *,
                  area_regions: Mapping[str, str] | None = None,
                  pivot: int = DEFAULT_PIVOT) -> SsnParts | NricMyParts | ShapeValid:
    """Parse a foreign identifier into whatever its structure reveals.

    SSN and Malaysian NRIC expose attributes; Singapore NRIC and Indian PAN are
    checked for shape only. Any mismatch raises IdentifierFormatError naming
    the first violated constraint.
    """
    if not isinstance(value, str):
        raise IdentifierFormatError(f"expected a string, got {type(value).__name__}")
    _check_shape(_SHAPES[scheme], value)
    if scheme is ForeignScheme.SSN_US:
        area, group, serial = value.split("-")
        region = (area_regions or {}).get(area)
        return SsnParts(area, group, serial, region)
    if scheme is ForeignScheme.NRIC_MY:
        yy, mm, dd = int(value[0:2]), int(value[2:4]), int(value[4:6])
        try:
            dob = dt.date(amka_year(yy, pivot), mm, dd)
        except ValueError as exc:
            raise IdentifierFormatError(f"date field: {exc}") from None
        sex = Sex.MALE if int(value[-1]) % 2 else Sex.FEMALE
        return NricMyParts(dob, value[7:9], sex)
    return ShapeValid(scheme, value)
