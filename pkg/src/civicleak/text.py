"""Name folding and Latin/Greek rendering shared by the services, miner and linker."""

from __future__ import annotations

import unicodedata

# Latin letters the bundled corpora may use ("C" only inside "CH"). Each Greek
# output letter comes from exactly one Latin chunk, so to_greek/from_greek
# round-trip on this alphabet.
NAME_ALPHABET = frozenset("ACDEFGHIKLMNOPRSTUVXZ")

_DIGRAPHS = {"TH": "Θ", "CH": "Χ", "PS": "Ψ"}
_SINGLE = {
    "A": "Α", "V": "Β", "G": "Γ", "D": "Δ", "E": "Ε", "Z": "Ζ", "H": "Η",
    "I": "Ι", "K": "Κ", "L": "Λ", "M": "Μ", "N": "Ν", "X": "Ξ", "O": "Ο",
    "P": "Π", "R": "Ρ", "S": "Σ", "T": "Τ", "U": "Υ", "F": "Φ",
}
_REVERSE = {g: latin for latin, g in {**_SINGLE, **_DIGRAPHS}.items()}
_REVERSE["Ω"] = "O"

GREEK_UPPER = "ΑΒΓΔΕΖΗΘΙΚΛΜΝΞΟΠΡΣΤΥΦΧΨΩ"


def is_corpus_name(name: str) -> bool:
    return (
        len(name) >= 2
        and set(name) <= NAME_ALPHABET
        and name.replace("CH", "").count("C") == 0
    )


def strip_accents(text: str) -> str:
    decomposed = unicodedata.normalize("NFD", text)
    return "".join(ch for ch in decomposed if not unicodedata.combining(ch))


def to_greek(name: str) -> str:
    """Render an uppercase Latin corpus name in Greek capitals."""
    name = name.upper()
    out = []
    i = 0
    while i < len(name):
        pair = name[i : i + 2]
        if pair in _DIGRAPHS:
            out.append(_DIGRAPHS[pair])
            i += 2
            continue
        ch = name[i]
        out.append(_SINGLE.get(ch, ch))
        i += 1
    return "".join(out)


def from_greek(text: str) -> str:
    return "".join(_REVERSE.get(ch, ch) for ch in text)


def fold(text: str) -> str:
    """Canonical matching form: accents stripped, upper case, Greek letters
    mapped back to the Latin corpus spelling."""
    if text.isascii():
        return text.upper().strip()
    s = strip_accents(text).upper().strip()
    if any("Ͱ" <= ch <= "Ͽ" for ch in s):
        s = from_greek(s)
    return s


def title(name: str) -> str:
    return name[:1].upper() + name[1:].lower()
