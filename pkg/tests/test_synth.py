import io
import json

import pytest

from sdohx.corpus import write_corpus
from sdohx.segmenter import normalize, segment
from sdohx.synth import (
    FACTOR_LEXICONS,
    NOISE_SENTENCES,
    TEMPORAL_PHRASES,
    TWO_WEEK_WINDOW_DAYS,
    GeneratorError,
    GeneratorSpec,
    _SUBJECTS,
    generate_corpus,
)

from conftest import SIX_FACTORS


class TestPhraseTables:
    def test_temporal_phrases_cover_window_boundary(self):
        offsets = set(TEMPORAL_PHRASES.values())
        assert 14 in offsets  # inclusive boundary is exercised
        assert 2 in offsets
        assert 90 in offsets
        assert all(0 <= d <= 365 for d in offsets)

    def test_no_temporal_phrase_contains_another(self):
        phrases = [normalize(p) for p in TEMPORAL_PHRASES]
        for a in phrases:
            for b in phrases:
                if a != b:
                    assert a not in b, (a, b)

    def test_lexicon_phrases_unique_to_their_factor(self):
        # No factor's phrase may appear in any sentence composable for
        # another factor, or retrieval gold would be ambiguous.
        sentences_by_factor = {
            fid: [
                normalize(f"{subj} {lex} {temp}.")
                for subj in _SUBJECTS
                for lex in lexemes
                for temp in TEMPORAL_PHRASES
            ]
            for fid, lexemes in FACTOR_LEXICONS.items()
        }
        for fid, lexemes in FACTOR_LEXICONS.items():
            for other_fid, sentences in sentences_by_factor.items():
                for phrase in lexemes:
                    hits = [s for s in sentences if normalize(phrase) in s]
                    if other_fid == fid:
                        assert hits
                    else:
                        assert not hits, (phrase, other_fid)

    def test_noise_sentences_clean(self):
        for noise in NOISE_SENTENCES:
            norm = normalize(noise)
            for phrases in FACTOR_LEXICONS.values():
                for phrase in phrases:
                    assert normalize(phrase) not in norm
            for temporal in TEMPORAL_PHRASES:
                assert normalize(temporal) not in norm
            assert len(segment("cme", noise)) == 1

    def test_mention_sentences_segment_whole(self):
        for fid, lexemes in FACTOR_LEXICONS.items():
            for subj in _SUBJECTS:
                for lex in lexemes:
                    for temp in TEMPORAL_PHRASES:
                        sentence = f"{subj} {lex} {temp}."
                        assert [s.text for s in segment("cme", sentence)] == [sentence]


class TestGenerateCorpus:
    def test_window_rule_brute_force(self, registry):
        spec = GeneratorSpec(seed=3, n_incidents=60, factor_ids=SIX_FACTORS)
        records, gold = generate_corpus(spec, registry)
        temporal_by_norm = {normalize(p): d for p, d in TEMPORAL_PHRASES.items()}
        lexicon_by_norm = {
            fid: [normalize(p) for p in phrases] for fid, phrases in FACTOR_LEXICONS.items()
        }
        for rec in records:
            for factor_id in SIX_FACTORS:
                # Brute force: re-derive the label from the report text alone.
                planted_offsets = []
                for tag in ("cme", "le"):
                    for span in segment(tag, rec.report(tag)):
                        norm = normalize(span.text)
                        if any(p in norm for p in lexicon_by_norm[factor_id]):
                            hits = [d for t, d in temporal_by_norm.items() if t in norm]
                            assert len(hits) == 1, span.text
                            planted_offsets.append(hits[0])
                expected = any(d <= TWO_WEEK_WINDOW_DAYS for d in planted_offsets)
                assert rec.gold_labels[factor_id] == expected

    def test_gold_sentences_point_at_planted_mentions(self, registry, small_corpus):
        records, _ = small_corpus
        lexicon_by_norm = {
            fid: [normalize(p) for p in phrases] for fid, phrases in FACTOR_LEXICONS.items()
        }
        for rec in records:
            spans = {tag: segment(tag, rec.report(tag)) for tag in ("cme", "le")}
            for factor_id, refs in (rec.gold_sentences or {}).items():
                for tag, index in refs:
                    norm = normalize(spans[tag][index].text)
                    assert any(p in norm for p in lexicon_by_norm[factor_id])

    def test_relevance_gold_covers_every_sentence(self, registry, small_corpus):
        records, gold = small_corpus
        for rec in records:
            n_sentences = sum(len(segment(t, rec.report(t))) for t in ("cme", "le"))
            for factor_id in SIX_FACTORS:
                labels = gold.labels_for(rec.incident_id, factor_id)
                assert len(labels) == n_sentences
                relevant = {ref for ref, rel in labels.items() if rel}
                planted = set((rec.gold_sentences or {}).get(factor_id, frozenset()))
                assert relevant == planted

    def test_determinism_byte_identical(self, registry):
        spec = GeneratorSpec(seed=7, n_incidents=50, factor_ids=SIX_FACTORS)
        outputs = []
        for _ in range(2):
            records, _ = generate_corpus(spec, registry)
            buf = io.StringIO()
            for rec in records:
                from sdohx.corpus import record_to_obj

                buf.write(json.dumps(record_to_obj(rec), ensure_ascii=False) + "\n")
            outputs.append(buf.getvalue())
        assert outputs[0] == outputs[1]

    def test_different_seeds_differ(self, registry):
        a, _ = generate_corpus(GeneratorSpec(seed=1, n_incidents=10, factor_ids=SIX_FACTORS), registry)
        b, _ = generate_corpus(GeneratorSpec(seed=2, n_incidents=10, factor_ids=SIX_FACTORS), registry)
        assert [r.cme_report for r in a] != [r.cme_report for r in b]

    def test_rates_validated(self, registry):
        with pytest.raises(GeneratorError, match="positive rate"):
            generate_corpus(
                GeneratorSpec(seed=1, n_incidents=2, factor_ids=SIX_FACTORS, positive_rate=1.2),
                registry,
            )
        with pytest.raises(GeneratorError, match="noise_rate"):
            generate_corpus(
                GeneratorSpec(seed=1, n_incidents=2, factor_ids=SIX_FACTORS, noise_rate=0.0),
                registry,
            )
        with pytest.raises(GeneratorError, match="n_incidents"):
            generate_corpus(GeneratorSpec(seed=1, n_incidents=0), registry)

    def test_unknown_factor_rejected(self, registry):
        with pytest.raises(GeneratorError, match="unknown factor_id"):
            generate_corpus(
                GeneratorSpec(seed=1, n_incidents=2, factor_ids=("bogus",)), registry
            )

    def test_every_record_valid_and_labeled(self, registry, small_corpus):
        records, _ = small_corpus
        for rec in records:
            assert rec.cme_report  # generator keeps the CME side non-empty
            assert set(rec.gold_labels) == set(SIX_FACTORS)

    def test_positives_present_for_each_factor(self, registry):
        spec = GeneratorSpec(seed=7, n_incidents=200, factor_ids=SIX_FACTORS)
        records, _ = generate_corpus(spec, registry)
        for factor_id in SIX_FACTORS:
            positives = sum(1 for r in records if r.gold_labels[factor_id])
            assert 0 < positives < len(records)

    def test_writes_valid_corpus(self, registry, small_corpus, tmp_path):
        records, _ = small_corpus
        write_corpus(tmp_path / "c.jsonl", records)
        from sdohx.corpus import load_corpus

        assert len(load_corpus(tmp_path / "c.jsonl", registry)) == len(records)
