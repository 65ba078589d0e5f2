"""Report parsing and text featurization."""

import math
from collections import Counter

import numpy as np
import pytest

from embalign.corpus import (EmbeddingSet, PairSet, WordVectorTable,
                             average_word_vectors, apply_tfidf, fit_tfidf,
                             ngrams, parse_report, serialize_report, tokenize,
                             transform_tfidf)


class TestParseReport:
    def test_two_header_case(self):
        rep = parse_report("FINDINGS: clear lungs.\nIMPRESSION: no acute disease.")
        assert rep.sections == {"findings": "clear lungs.",
                                "impression": "no acute disease."}

    def test_no_headers_goes_to_other(self):
        text = "Comparison with the prior study shows no change."
        rep = parse_report(text)
        assert rep.sections == {"other": text}

    def test_mixed_case_and_space_before_colon(self):
        rep = parse_report("Impression : stable appearance.")
        assert rep.sections == {"impression": "stable appearance."}

    def test_preamble_goes_to_other(self):
        rep = parse_report("Portable exam.\nFINDINGS: low volumes.")
        assert rep.sections == {"other": "Portable exam.", "findings": "low volumes."}

    def test_unknown_header_stays_in_body(self):
        rep = parse_report("FINDINGS: effusion.\nTECHNIQUE: single view.")
        assert rep.sections == {"findings": "effusion.\nTECHNIQUE: single view."}

    def test_empty_raises(self):
        with pytest.raises(ValueError):
            parse_report("   \n ")

    def test_fixtures_extract_expected_sections(self, fixture_reports):
        for rid, raw, impression, findings in fixture_reports:
            rep = parse_report(raw, report_id=rid)
            assert rep.sections.get("impression") == impression, rid
            assert rep.sections.get("findings") == findings, rid

    def test_parse_serialize_idempotent(self, fixture_reports):
        """Parsing a re-serialized report yields identical sections."""
        for rid, raw, _, _ in fixture_reports:
            rep = parse_report(raw, report_id=rid)
            again = parse_report(serialize_report(rep), report_id=rid)
            assert again.sections == rep.sections, rid


class TestTokenize:
    def test_sentence(self):
        assert tokenize("No acute cardiopulmonary process.") == [
            "no", "acute", "cardiopulmonary", "process"]

    def test_numbers_split_on_punctuation(self):
        assert tokenize("2.3 cm nodule") == ["2", "3", "cm", "nodule"]

    def test_empty(self):
        assert tokenize("") == []

    def test_ngrams(self):
        assert ngrams(["a", "b", "c"], 2) == [("a", "b"), ("b", "c")]
        assert ngrams(["a"], 2) == []
        with pytest.raises(ValueError):
            ngrams(["a"], 0)


class TestTfidf:
    def test_single_doc_bigrams(self):
        model = fit_tfidf([["a", "b", "c"]], ngram_order=2)
        assert set(model.vocabulary) == {("a", "b"), ("b", "c")}
        # idf = ln((1+1)/(1+1)) + 1 = 1 for both
        np.testing.assert_allclose(model.idf, 1.0)

    def test_term_in_all_docs_has_floor_idf(self):
        docs = [["x", "y"], ["x", "z"], ["x", "w"]]
        model = fit_tfidf(docs, ngram_order=1)
        assert model.idf[model.vocabulary[("x",)]] == pytest.approx(
            math.log(4 / 4) + 1.0)

    def test_min_df_excludes_singletons(self):
        docs = [["a", "b"], ["a", "c"]]
        model = fit_tfidf(docs, ngram_order=2, min_df=2)
        assert ("a", "b") not in model.vocabulary
        assert ("a", "c") not in model.vocabulary

    def test_empty_corpus_rejected(self):
        with pytest.raises(ValueError):
            fit_tfidf([], ngram_order=1)
        with pytest.raises(ValueError):
            fit_tfidf([[], []], ngram_order=1)

    def test_oov_doc_is_zero_vector(self):
        model = fit_tfidf([["a", "b"]], ngram_order=1)
        row = apply_tfidf(model, ["q", "r"])
        assert row.nnz == 0

    def test_scale_invariance_under_l2(self):
        model = fit_tfidf([["a", "b", "a"], ["b", "c"]], ngram_order=1)
        doc = ["a", "b", "c", "a"]
        once = apply_tfidf(model, doc).toarray()
        twice = apply_tfidf(model, doc + doc).toarray()
        np.testing.assert_allclose(once, twice, atol=1e-12)

    def test_three_doc_corpus_against_brute_force(self):
        """Vector entries equal an independent tf/df recount."""
        docs = [["no", "acute", "disease"],
                ["acute", "process", "no", "acute"],
                ["clear", "lungs", "no"]]
        model = fit_tfidf(docs, ngram_order=1, norm=False)
        n = len(docs)
        df = Counter()
        for d in docs:
            df.update(set((t,) for t in d))
        for doc in docs:
            got = apply_tfidf(model, doc).toarray().ravel()
            tf = Counter((t,) for t in doc)
            for term, idx in model.vocabulary.items():
                expected = tf.get(term, 0) * (math.log((1 + n) / (1 + df[term])) + 1.0)
                assert got[idx] == pytest.approx(expected, abs=1e-12), term

    def test_norm_is_one_or_zero(self):
        docs = [["a", "b"], ["b", "c"], ["c", "d"]]
        model = fit_tfidf(docs, ngram_order=1)
        for doc in (["a", "b", "c"], ["zzz"], ["d"]):
            nrm = np.linalg.norm(apply_tfidf(model, doc).toarray())
            assert nrm == 0.0 or abs(nrm - 1.0) < 1e-12

    def test_token_order_invariance(self):
        """Unigram vectors depend only on the token multiset; higher orders
        only on the n-gram multiset."""
        model = fit_tfidf([["a", "b", "c"], ["c", "d"]], ngram_order=1)
        v1 = apply_tfidf(model, ["a", "c", "b"]).toarray()
        v2 = apply_tfidf(model, ["c", "b", "a"]).toarray()
        np.testing.assert_array_equal(v1, v2)

        model2 = fit_tfidf([["a", "b", "a", "b"]], ngram_order=2)
        d1 = ["a", "b", "x", "a", "b"]   # bigrams: (a,b), (b,x), (x,a), (a,b)
        d2 = ["a", "b", "y", "a", "b"]   # same in-vocabulary bigram multiset
        np.testing.assert_array_equal(apply_tfidf(model2, d1).toarray(),
                                      apply_tfidf(model2, d2).toarray())

    def test_unigram_order_is_plain_special_case(self):
        """The shared n-gram path at order 1 equals a hand unigram model."""
        docs = [["a", "b"], ["b", "c"]]
        model = fit_tfidf(docs, ngram_order=1)
        assert set(model.vocabulary) == {("a",), ("b",), ("c",)}

    def test_transform_stacks_rows(self):
        docs = [["a", "b"], ["b"]]
        model = fit_tfidf(docs, ngram_order=1)
        mat = transform_tfidf(model, docs)
        assert mat.shape == (2, model.size)


class TestWordVectors:
    def test_single_known_token(self):
        table = WordVectorTable(dimension=2, entries={"a": np.array([1.0, 2.0])})
        vec, matched = average_word_vectors(table, ["a"])
        np.testing.assert_array_equal(vec, [1.0, 2.0])
        assert matched == 1

    def test_opposite_vectors_average_to_zero(self):
        table = WordVectorTable(dimension=2, entries={
            "a": np.array([1.0, -1.0]), "b": np.array([-1.0, 1.0])})
        vec, matched = average_word_vectors(table, ["a", "b"])
        np.testing.assert_allclose(vec, 0.0)
        assert matched == 2

    def test_all_unknown_yields_zero_and_flag(self):
        table = WordVectorTable(dimension=3, entries={"a": np.zeros(3)})
        vec, matched = average_word_vectors(table, ["x", "y"])
        np.testing.assert_array_equal(vec, np.zeros(3))
        assert matched == 0


class TestEmbeddingSet:
    def test_validates_ids_and_shape(self):
        with pytest.raises(ValueError):
            EmbeddingSet(ids=("a", "a"), vectors=np.zeros((2, 3)))
        with pytest.raises(ValueError):
            EmbeddingSet(ids=("a",), vectors=np.zeros((2, 3)))
        with pytest.raises(ValueError):
            EmbeddingSet(ids=("a",), vectors=np.array([[np.nan, 0.0]]))

    def test_columns_and_take(self):
        emb = EmbeddingSet(ids=("a", "b", "c"), vectors=np.arange(6.0).reshape(3, 2))
        assert emb.columns().shape == (2, 3)
        sub = emb.take([2, 0])
        assert sub.ids == ("c", "a")


class TestPairSet:
    def test_column_indices(self):
        text = EmbeddingSet(ids=("t1", "t2"), vectors=np.zeros((2, 2)))
        image = EmbeddingSet(ids=("i1", "i2"), vectors=np.zeros((2, 2)))
        ps = PairSet(pairs=(("t2", "i1"),))
        xs, ys = ps.column_indices(text, image)
        assert list(xs) == [1] and list(ys) == [0]

    def test_missing_id_raises(self):
        text = EmbeddingSet(ids=("t1",), vectors=np.zeros((1, 2)))
        image = EmbeddingSet(ids=("i1",), vectors=np.zeros((1, 2)))
        with pytest.raises(ValueError):
            PairSet(pairs=(("t9", "i1"),)).column_indices(text, image)

    def test_scores_length_checked(self):
        with pytest.raises(ValueError):
            PairSet(pairs=(("a", "b"),), scores=(1.0, 2.0))
