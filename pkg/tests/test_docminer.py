import datetime as dt

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from civicleak.defense import DefensePolicy, sanitize_document
from civicleak.docminer import (
    Confidence,
    ExtractorConfig,
    NoiseModel,
    apply_noise,
    bundled_templates,
    evaluate_extraction,
    extract_corpus,
    extract_pii,
    generate_corpus,
    load_corpus,
    save_corpus,
)
from civicleak.ident import parse_id_card
from civicleak.model import AnnotationKind, DocMetadata, Document
from civicleak.population import CapacityError, PopulationConfig, generate_world

META = DocMetadata("x", dt.date(2015, 1, 1), "org")


def doc(text):
    return Document("d", text, META)


@pytest.fixture(scope="module")
def world():
    return generate_world(PopulationConfig(person_count=1500, seed=4, trn_exponent=6))


@pytest.fixture(scope="module")
def corpus(world):
    return generate_corpus(world, 120, seed=2)


def test_paper_style_sentence():
    hits = extract_pii(doc("John Papadopoulos, son of George, with ΑΔΤ AB-123456"))
    assert len(hits) == 1
    h = hits[0]
    assert h.id_card == parse_id_card("ΑΒ123456")
    assert (h.name.first, h.name.last, h.name.father) == ("JOHN", "PAPADOPOULOS", "GEORGE")
    assert h.confidence is Confidence.ANCHOR_PLUS_NAME


def test_anchor_without_id_gives_nothing():
    assert extract_pii(doc("ΑΔΤ pending, see annex. ΑΔΤ 12345")) == []


def test_two_ids_two_hits():
    hits = extract_pii(doc("ΑΔΤ AB-123456 and later ΑΔΤ Κ 654321"))
    assert [h.value for h in hits] == ["ΑΒ123456", "Κ654321"]
    assert hits[0].end <= hits[1].start
    assert all(h.confidence is Confidence.ANCHOR_ONLY for h in hits)


def test_name_after_id_and_id_before_anchor():
    h = extract_pii(doc("ΑΔΤ ΑΒ-123456 Γιωργοσ Παπαδοπουλοσ του Νικου"))[0]
    assert (h.name.first, h.name.last, h.name.father) == ("GIORGOS", "PAPADOPOULOS", "NIKOU")
    text = "Maria Ioannou, AB-123456 (ΑΔΤ)"
    assert extract_pii(doc(text)) == []
    before = extract_pii(doc(text), ExtractorConfig(direction="before"))
    assert [h.value for h in before] == ["ΑΒ123456"]


def test_config_validation():
    with pytest.raises(ValueError):
        ExtractorConfig(window=0)
    with pytest.raises(ValueError):
        ExtractorConfig(anchors=())


@given(st.text(max_size=300))
@settings(max_examples=200, deadline=None)
def test_extractor_is_total_and_sound(text):
    for h in extract_pii(doc(text), ExtractorConfig(direction="both")):
        assert h.start < h.end <= len(text)
        # no fabricated hit: the normalised id comes from the text itself
        assert h.value[-6:] in text


def test_corpus_determinism_and_annotations(world, corpus):
    assert generate_corpus(world, 120, seed=2) == corpus
    authors = set(bundled_templates().authors)
    for d in corpus:
        assert d.annotations and d.metadata.author in authors
        spans = sorted((a.start, a.end) for a in d.annotations)
        assert all(0 <= s < e <= len(d.text) for s, e in spans)
        assert all(e1 <= s2 for (_, e1), (s2, _) in zip(spans, spans[1:]))
    with pytest.raises(CapacityError):
        generate_corpus(generate_world(PopulationConfig(person_count=0)), 1)


def test_clean_corpus_scores_perfectly(corpus):
    r = evaluate_extraction(corpus, extract_corpus(corpus))
    for kind in (AnnotationKind.ID_CARD, AnnotationKind.TRN, AnnotationKind.AMKA):
        assert r[kind].precision == r[kind].recall == 1.0
    assert r.name_binding_accuracy == 1.0


def test_noise_is_identity_at_zero_and_nested(corpus):
    assert apply_noise(corpus, NoiseModel(0.0, 5)) == corpus
    lo = apply_noise(corpus, NoiseModel(0.02, 5))
    hi = apply_noise(corpus, NoiseModel(0.05, 5))
    for c, a, b in zip(corpus, lo, hi):
        assert len(c.text) == len(a.text) == len(b.text)
        changed_lo = {i for i, (x, y) in enumerate(zip(c.text, a.text)) if x != y}
        changed_hi = {i for i, (x, y) in enumerate(zip(c.text, b.text)) if x != y}
        assert changed_lo <= changed_hi


def test_sanitized_corpus_has_zero_identifier_recall(corpus):
    clean = [sanitize_document(DefensePolicy(), d) for d in corpus]
    r = evaluate_extraction(clean, extract_corpus(clean))
    assert all(r[k].recall == 0.0 for k in (AnnotationKind.ID_CARD, AnnotationKind.TRN, AnnotationKind.AMKA))


def test_no_hits_means_precision_one(corpus):
    r = evaluate_extraction(corpus, [])
    assert r[AnnotationKind.ID_CARD].precision == 1.0 and r[AnnotationKind.ID_CARD].recall == 0.0


def test_corpus_file_round_trip(corpus, tmp_path):
    save_corpus(corpus, tmp_path / "c.jsonl")
    assert load_corpus(tmp_path / "c.jsonl") == corpus
