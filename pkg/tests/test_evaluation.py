from __future__ import annotations

import csv
import json
import random
import statistics

import pytest
from hypothesis import given
from hypothesis import strategies as st

from ontorag.blocks import chunk_documents
from ontorag.embedding import HashingEmbeddingProvider
from ontorag.evaluation import (
    CSV_COLUMNS,
    CoverError,
    EvalQuestion,
    EvalReport,
    EvalRow,
    QuestionFileError,
    baseline_chunk_retrieve,
    brute_force_min_cover,
    context_entity_recall,
    load_questions,
    parse_questions,
    run_eval,
)
from ontorag.hypergraph import Hyperedge, Hypergraph, Hypernode, Provenance
from ontorag.mapping import StubMappingClient
from ontorag.store import preprocess

N = Hypernode
n1, n2, n3 = (N(f"n{i}", f"v{i}") for i in range(1, 4))


def graph(*members) -> Hypergraph:
    return Hypergraph(Hyperedge(i, tuple(m), Provenance(f"b{i}")) for i, m in enumerate(members))


def test_three_of_four_entities():
    ctx = '{"Crop has name": "Wheat", "Crop is grown in CropRegion has a name": "Great  Plains"}\nwinter sowing'
    assert context_entity_recall(ctx, ["wheat", "great plains", "Winter", "barley"]) == 0.75


def test_all_and_none_present():
    assert context_entity_recall("Soybean in Ohio", ["soybean", "OHIO"]) == 1.0
    assert context_entity_recall("Soybean in Ohio", ["maize"]) == 0.0


def test_entity_whitespace_is_normalized():
    assert context_entity_recall("North\n\tWest   Region", [" north west\nregion "]) == 1.0


def test_entities_required():
    with pytest.raises(ValueError):
        context_entity_recall("x", [])


@given(st.text(max_size=60), st.text(max_size=60), st.lists(st.text(min_size=1, max_size=6), min_size=1, max_size=5))
def test_recall_is_monotone(context, extra, entities):
    assert context_entity_recall(context + extra, entities) >= context_entity_recall(context, entities)


def test_min_cover_examples():
    assert brute_force_min_cover(graph({n1}, {n2}, {n1, n2}), {n1, n2}) == (1, [2])
    assert brute_force_min_cover(graph({n1}), set()) == (0, [])


def test_min_cover_rejects_uncoverable_targets():
    with pytest.raises(CoverError, match="outside edge union"):
        brute_force_min_cover(graph({n1}), {n1, n3})


def test_min_cover_size_guard():
    h = graph(*({n1, N(f"x{i}", "")} for i in range(21)))
    with pytest.raises(CoverError, match="too large"):
        brute_force_min_cover(h, {n1})


def test_min_cover_is_minimal_against_exhaustive_check():
    from itertools import combinations

    rng = random.Random(9)
    for _ in range(40):
        pool = [N(f"t{i}", "") for i in range(6)]
        members = [set(rng.sample(pool, rng.randint(1, 3))) for _ in range(rng.randint(3, 8))]
        h = graph(*members)
        targets = set().union(*members)
        size, cover = brute_force_min_cover(h, targets)
        assert set().union(*(members[i] for i in cover)) == targets
        for smaller in combinations(range(len(members)), size - 1):
            assert set().union(set(), *(members[i] for i in smaller)) != targets


def corpus_chunks():
    return chunk_documents([("a", "wheat grows in kansas"), ("b", "rice needs water"), ("c", "soybean in ohio")], 100)


def test_baseline_single_chunk():
    chunks = corpus_chunks()[:1]
    assert baseline_chunk_retrieve(chunks, "anything", 1, HashingEmbeddingProvider()) == chunks


def test_baseline_query_equal_to_chunk_ranks_it_first():
    chunks = corpus_chunks()
    assert baseline_chunk_retrieve(chunks, "rice needs water", 1, HashingEmbeddingProvider())[0].doc_id == "b"


def test_baseline_m_larger_than_corpus():
    chunks = corpus_chunks()
    hits = baseline_chunk_retrieve(chunks, "ohio", 10, HashingEmbeddingProvider())
    assert sorted(c.doc_id for c in hits) == ["a", "b", "c"]
    assert hits[0].doc_id == "c"


def test_baseline_m_must_be_positive():
    with pytest.raises(ValueError):
        baseline_chunk_retrieve(corpus_chunks(), "x", 0, HashingEmbeddingProvider())


def test_question_parsing_errors(tmp_path):
    with pytest.raises(QuestionFileError):
        parse_questions({"id": 1})
    with pytest.raises(QuestionFileError, match="reference_entities"):
        parse_questions([{"id": "q", "query": "x", "reference_entities": []}])
    with pytest.raises(QuestionFileError, match="unique"):
        parse_questions([{"id": "q", "query": "x", "reference_entities": ["a"]}] * 2)
    bad = tmp_path / "q.json"
    bad.write_text("[{")
    with pytest.raises(QuestionFileError):
        load_questions(bad)


def test_aggregates_match_recomputed_means():
    rng = random.Random(1)
    rows = [
        EvalRow(f"q{i}", m, rng.random(), rng.randint(0, 10), rng.random() * 50)
        for i in range(37)
        for m in ("og", "rag@2")
    ]
    agg = EvalReport(rows).aggregates()
    for method in ("og", "rag@2"):
        mine = [r for r in rows if r.method == method]
        assert agg[method]["count"] == len(mine)
        assert abs(agg[method]["c_erec_mean"] - sum(r.c_erec for r in mine) / len(mine)) <= 1e-12
        assert abs(agg[method]["latency_ms_mean"] - statistics.mean(r.latency_ms for r in mine)) <= 1e-12
        assert abs(agg[method]["context_edges_mean"] - sum(r.context_edges for r in mine) / len(mine)) <= 1e-12


DOCS = [
    ("d1.txt", "Soybean is grown in the Northwest Region."),
    ("d2.txt", "Maize is grown in the Corn Belt."),
    ("d3.txt", "Rice is grown in the Mekong Delta."),
]
QUESTIONS = [
    EvalQuestion("q2", "Where is Maize grown?", "Corn Belt", ("Maize", "Corn Belt")),
    EvalQuestion("q1", "Where is Soybean grown?", "Northwest Region", ("soybean", "northwest region")),
]


@pytest.fixture
def store(tmp_path, seed_ontology):
    return preprocess(seed_ontology, DOCS, StubMappingClient(), HashingEmbeddingProvider(), tmp_path / "store").store


def test_run_eval_rows_and_files(tmp_path, store):
    report = run_eval(store, QUESTIONS, ("og", "rag"), k=5, L=10, ms=(1, 2))
    assert [(r.question_id, r.method) for r in report.rows] == [
        ("q1", "og"), ("q1", "rag@1"), ("q1", "rag@2"),
        ("q2", "og"), ("q2", "rag@1"), ("q2", "rag@2"),
    ]
    for r in report.rows:
        if r.method == "og":
            assert r.target_coverage == 1.0
            assert r.c_erec == 1.0
    written = report.write(tmp_path / "out", figures=True)
    names = sorted(p.name for p in written)
    assert names == ["report.csv", "report.json", "report_c_erec.png", "report_latency.png"]
    with (tmp_path / "out" / "report.csv").open() as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == CSV_COLUMNS
    assert len(rows) == 7
    doc = json.loads((tmp_path / "out" / "report.json").read_text())
    assert set(doc) == {"params", "rows", "aggregates"}
    assert doc["aggregates"]["og"]["count"] == 2
    for p in written:
        if p.suffix == ".png":
            assert p.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_run_eval_without_figures(tmp_path, store):
    report = run_eval(store, QUESTIONS, ("og",))
    assert [p.name for p in report.write(tmp_path / "o", figures=False)] == ["report.csv", "report.json"]


def test_run_eval_rejects_unknown_method(store):
    with pytest.raises(ValueError):
        run_eval(store, QUESTIONS, ("raptor",))


def test_judge_scores_are_attached(store):
    class LengthJudge:
        name = "len"

        def score(self, question, context, answer):
            return {"context_chars": float(len(context))}

    report = run_eval(store, QUESTIONS[:1], ("og",), judge=LengthJudge())
    assert report.rows[0].extra["context_chars"] > 0
