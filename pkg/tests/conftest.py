from __future__ import annotations

import random
from dataclasses import dataclass, field
from pathlib import Path

import pytest

from ontorag.blocks import EntityRef, FactualBlock, Relation, rel
from ontorag.hypergraph import Hyperedge, Hypergraph, Hypernode, Provenance
from ontorag.ontology import load_ontology

FIXTURES = Path(__file__).parent / "fixtures"

_ACCEPTANCE_LINES: dict[int, str] = {}


def record_acceptance(number: int, line: str) -> None:
    _ACCEPTANCE_LINES[number] = line


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(_ACCEPTANCE_LINES[number])


@pytest.fixture
def fixtures() -> Path:
    return FIXTURES


@pytest.fixture
def seed_ontology():
    return load_ontology(FIXTURES / "seed_ontology.json")


@pytest.fixture
def seed_block() -> FactualBlock:
    return FactualBlock(
        "seed",
        (
            rel("Seed", "of crop", "Soybean"),
            rel("Seed", "is grown in", EntityRef("CropRegion")),
            rel("CropRegion", "has a name", "Northwest Region"),
        ),
    )


class FakeClient:
    """Returns canned completions in order and records the prompts it saw."""

    model = "fake"

    def __init__(self, *responses: str):
        self.responses = list(responses)
        self.prompts: list[str] = []

    def complete(self, prompt: str) -> str:
        self.prompts.append(prompt)
        return self.responses.pop(0) if len(self.responses) > 1 else self.responses[0]


# --- random factual blocks with an independent expectation -----------------

ENTITY_NAMES = ["Crop", "Zone", "Seed", "Pest", "Soil"]
ATTRIBUTES = ["has name", "has", "uses", "rate", "stage"]
WORDS = ["alpha", "beta", "gamma", "delta", "north", "south", "wet", "dry", "1 kg", "2 ha"]


@dataclass
class TreeNode:
    ref: EntityRef
    key_path: str
    leaves: list[tuple[str, str]] = field(default_factory=list)
    children: list[TreeNode] = field(default_factory=list)
    depth: int = 0


@dataclass
class RandomBlock:
    block: FactualBlock
    roots: list[TreeNode]

    def nodes(self) -> list[TreeNode]:
        out, stack = [], list(self.roots)
        while stack:
            n = stack.pop()
            out.append(n)
            stack.extend(n.children)
        return out


def random_block(rng: random.Random, max_relations: int = 10, max_depth: int = 3, block_id: str = "b") -> RandomBlock:
    counters: dict[str, int] = {}

    def new_ref(name: str) -> EntityRef:
        counters[name] = counters.get(name, 0) + 1
        return EntityRef(name, counters[name] - 1)

    n_roots = 1 if rng.random() < 0.8 else 2
    roots = []
    for _ in range(n_roots):
        name = rng.choice(ENTITY_NAMES)
        roots.append(TreeNode(new_ref(name), name))
    relations: list[Relation] = []
    nodes = list(roots)
    target = rng.randint(1, max_relations)
    while len(relations) < target:
        parent = rng.choice(nodes)
        attribute = rng.choice(ATTRIBUTES)
        if parent.depth < max_depth and rng.random() < 0.35 and len(relations) < target - 1:
            name = rng.choice(ENTITY_NAMES)
            child = TreeNode(new_ref(name), f"{parent.key_path} {attribute} {name}", depth=parent.depth + 1)
            parent.children.append(child)
            nodes.append(child)
            relations.append(Relation(parent.ref, attribute, child.ref))
        else:
            value = rng.choice(WORDS)
            parent.leaves.append((attribute, value))
            relations.append(Relation(parent.ref, attribute, value))
    # a root without any relation is not a root of the block at all
    roots = [r for r in roots if r.leaves or r.children]
    return RandomBlock(FactualBlock(block_id, tuple(relations)), roots)


def expected_flat_blocks(rb: RandomBlock) -> dict[int, frozenset[Hypernode]]:
    """Expected flattened block per tree node, keyed by ``id(node)``.

    Every node sees the text values of all roots plus those of its own
    ancestors and itself, each keyed by its full path.
    """
    base = frozenset(Hypernode(f"{r.key_path} {a}", v) for r in rb.roots for a, v in r.leaves)
    out: dict[int, frozenset[Hypernode]] = {}

    def walk(node: TreeNode, inherited: frozenset[Hypernode]) -> None:
        here = inherited | {Hypernode(f"{node.key_path} {a}", v) for a, v in node.leaves}
        out[id(node)] = here
        for c in node.children:
            walk(c, here)

    for r in rb.roots:
        out[id(r)] = base
        for c in r.children:
            walk(c, base)
    return out


# --- random hypergraphs ------------------------------------------------------


def random_hypergraph(rng: random.Random, max_edges: int = 12, max_targets: int = 8, extra_nodes: int = 4):
    n_targets = rng.randint(0, max_targets)
    targets = [Hypernode(f"t{i}", f"v{i}") for i in range(n_targets)]
    others = [Hypernode(f"o{i}", f"w{i}") for i in range(extra_nodes)]
    pool = targets + others
    n_edges = rng.randint(max(1, 1 if n_targets else 1), max_edges)
    members: list[set[Hypernode]] = []
    for _ in range(n_edges):
        size = rng.randint(1, min(len(pool), 5))
        members.append(set(rng.sample(pool, size)))
    for t in targets:
        if not any(t in m for m in members):
            rng.choice(members).add(t)
    edges = [Hyperedge(i, tuple(m), Provenance(f"b{i}")) for i, m in enumerate(members)]
    return Hypergraph(edges), set(targets)
