from __future__ import annotations

import json
import random

import pytest

from conftest import expected_flat_blocks, random_block
from ontorag.blocks import EntityRef, FactualBlock, Relation, rel
from ontorag.hypergraph import (
    FlattenError,
    Hyperedge,
    Hypergraph,
    Hypernode,
    Provenance,
    StoreFormatError,
    build_hypergraph,
    drop_subset_blocks,
    flatten,
    join_path,
    load_hypergraph,
    save_hypergraph,
)

N = Hypernode


def as_sets(flats):
    return [frozenset(f) for f in flats]


def test_seed_block_flattens_to_the_nested_fact(seed_block):
    flats = as_sets(flatten(seed_block))
    target = frozenset({N("Seed of crop", "Soybean"), N("Seed is grown in CropRegion has a name", "Northwest Region")})
    assert target in flats
    assert frozenset({N("Seed of crop", "Soybean")}) in flats
    assert len(flats) == 2


def test_seed_block_with_dedupe_is_one_edge(seed_block):
    h = build_hypergraph([seed_block], dedupe_subset_edges=True)
    assert len(h.edges) == 1
    assert set(h.edges[0].nodes) == {
        N("Seed of crop", "Soybean"),
        N("Seed is grown in CropRegion has a name", "Northwest Region"),
    }


def test_flat_block_is_one_flattened_block():
    block = FactualBlock("b", (rel("Crop", "has name", "Wheat"), rel("Crop", "has season", "winter")))
    assert as_sets(flatten(block)) == [frozenset({N("Crop has name", "Wheat"), N("Crop has season", "winter")})]


def test_two_independent_nested_entities():
    block = FactualBlock("b", (
        rel("Crop", "has name", "Wheat"),
        rel("Crop", "is grown in", EntityRef("CropRegion")),
        rel("CropRegion", "has a name", "Kansas"),
        rel("Crop", "uses", EntityRef("Seed")),
        rel("Seed", "of variety", "Hard Red"),
    ))
    base = frozenset({N("Crop has name", "Wheat")})
    flats = as_sets(flatten(block))
    assert flats[0] == base
    assert set(flats[1:]) == {
        base | {N("Crop is grown in CropRegion has a name", "Kansas")},
        base | {N("Crop uses Seed of variety", "Hard Red")},
    }
    assert all(f > base for f in flats[1:])


def test_repeated_branches_stay_separate():
    z0, z1 = EntityRef("Zone", 0), EntityRef("Zone", 1)
    block = FactualBlock("b", (
        rel("Crop", "has name", "Wheat"),
        rel("Crop", "has zone", z0),
        rel("Crop", "has zone", z1),
        rel(z0, "with name", "A"),
        rel(z1, "with name", "B"),
    ))
    flats = as_sets(flatten(block))
    assert frozenset({N("Crop has name", "Wheat"), N("Crop has zone Zone with name", "A")}) in flats
    assert frozenset({N("Crop has name", "Wheat"), N("Crop has zone Zone with name", "B")}) in flats


def test_cycle_raises():
    block = FactualBlock("b", (
        rel("A", "x", EntityRef("B")),
        rel("B", "y", EntityRef("A")),
        rel("B", "name", "b"),
    ))
    with pytest.raises(FlattenError, match="cycle"):
        flatten(block)


def test_join_path_uses_single_spaces():
    assert join_path("Seed", "is grown in", "CropRegion", "has a name") == "Seed is grown in CropRegion has a name"


@pytest.mark.parametrize("seed", range(100))
def test_flatten_matches_tree_oracle(seed):
    rb = random_block(random.Random(seed))
    expected = {s for s in expected_flat_blocks(rb).values() if s}
    assert set(as_sets(flatten(rb.block))) == expected


@pytest.mark.parametrize("seed", range(50))
def test_flatten_ignores_relation_order(seed):
    rng = random.Random(seed)
    rb = random_block(rng)
    rels = list(rb.block.relations)
    rng.shuffle(rels)
    assert flatten(FactualBlock("other", tuple(rels))) == flatten(rb.block)


def test_identical_blocks_from_two_sources_make_two_edges(seed_block):
    other = FactualBlock("seed-copy", seed_block.relations)
    h = build_hypergraph([seed_block, other], dedupe_subset_edges=True)
    assert len(h.edges) == 2
    assert h.edges[0].nodes == h.edges[1].nodes
    assert h.edges[0].provenance != h.edges[1].provenance
    assert h.edges_of(h.edges[0].nodes[0]) == [0, 1]


def test_empty_input_builds_empty_graph():
    h = build_hypergraph([])
    assert h.edges == [] and h.nodes == [] and h.incidence == {}


def test_dedupe_only_compares_within_a_block():
    small = FactualBlock("a", (rel("Crop", "has name", "Wheat"),))
    big = FactualBlock("b", (rel("Crop", "has name", "Wheat"), rel("Crop", "has season", "winter")))
    h = build_hypergraph([small, big], dedupe_subset_edges=True)
    assert len(h.edges) == 2


def test_drop_subset_blocks():
    a, b, c = N("a", "1"), N("b", "2"), N("c", "3")
    assert drop_subset_blocks([(a,), (a, b), (c,)]) == [(a, b), (c,)]


def test_edge_ids_follow_input_order(seed_block):
    other = FactualBlock("x", (rel("Seed", "of crop", "Maize"),))
    h = build_hypergraph([other, seed_block])
    assert [e.edge_id for e in h.edges] == [0, 1, 2]
    assert h.edges[0].provenance.block_id == "x"


def test_edge_needs_nodes():
    with pytest.raises(ValueError):
        Hyperedge(0, (), Provenance("b"))


def test_edge_nodes_are_deduplicated():
    e = Hyperedge(0, (N("a", "1"), N("a", "1"), N("b", "2")), Provenance("b"))
    assert e.nodes == (N("a", "1"), N("b", "2"))


def test_incidence_is_exact_on_random_blocks():
    rng = random.Random(3)
    blocks = [random_block(rng, block_id=f"b{i}").block for i in range(40)]
    h = build_hypergraph(blocks)
    assert h.incidence_violations() == []
    for e in h.edges:
        for n in e.nodes:
            assert e.edge_id in h.edges_of(n)
    assert set(h.nodes) == {n for e in h.edges for n in e.nodes}


def test_save_and_load_round_trip(tmp_path, seed_block):
    h = build_hypergraph([seed_block, FactualBlock("z", (rel("Seed", "of crop", "Ünïcode ✓"),))])
    save_hypergraph(h, tmp_path, "abc")
    again = load_hypergraph(tmp_path)
    assert again == h
    assert [e.provenance for e in again.edges] == [e.provenance for e in h.edges]
    assert again.incidence == h.incidence


def test_empty_graph_round_trip(tmp_path):
    save_hypergraph(Hypergraph(), tmp_path)
    assert load_hypergraph(tmp_path) == Hypergraph()


def test_edges_file_format(tmp_path, seed_block):
    save_hypergraph(build_hypergraph([seed_block], True), tmp_path)
    raw = (tmp_path / "edges.jsonl").read_bytes()
    assert b"\r" not in raw and raw.endswith(b"\n")
    rec = json.loads(raw.decode("utf-8").splitlines()[0])
    assert set(rec) == {"id", "provenance", "nodes"}
    assert rec["nodes"][0] == {"key": "Seed is grown in CropRegion has a name", "value": "Northwest Region"}


def test_wrong_version_is_rejected(tmp_path, seed_block):
    save_hypergraph(build_hypergraph([seed_block]), tmp_path)
    meta = json.loads((tmp_path / "meta.json").read_text())
    meta["format_version"] = 99
    (tmp_path / "meta.json").write_text(json.dumps(meta))
    with pytest.raises(StoreFormatError, match="version"):
        load_hypergraph(tmp_path)


def test_checksum_mismatch_is_rejected(tmp_path, seed_block):
    save_hypergraph(build_hypergraph([seed_block]), tmp_path)
    path = tmp_path / "edges.jsonl"
    path.write_bytes(path.read_bytes().replace(b"Soybean", b"Soyabean"))
    with pytest.raises(StoreFormatError, match="checksum"):
        load_hypergraph(tmp_path)


def test_missing_store_is_reported(tmp_path):
    with pytest.raises(StoreFormatError, match="preprocess"):
        load_hypergraph(tmp_path / "nope")


def test_leaf_entity_without_relations_adds_nothing():
    block = FactualBlock("b", (rel("Crop", "has name", "Wheat"), Relation(EntityRef("Crop"), "uses", EntityRef("Seed"))))
    assert block.dangling_refs() == [EntityRef("Seed")]
    assert as_sets(flatten(block)) == [frozenset({N("Crop has name", "Wheat")})]
