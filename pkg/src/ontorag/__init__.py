"""Ontology-grounded retrieval over a hypergraph of document facts."""

from ontorag.blocks import DocumentChunk, EntityRef, FactualBlock, Relation, chunk_documents, rel
from ontorag.embedding import HashingEmbeddingProvider, IndexKind, NodeIndex, RemoteEmbeddingProvider, embed, top_k
from ontorag.generation import build_answer_prompt, build_deduction_prompt
from ontorag.hypergraph import (
    Hyperedge,
    Hypergraph,
    Hypernode,
    Provenance,
    build_hypergraph,
    flatten,
    load_hypergraph,
    save_hypergraph,
)
from ontorag.mapping import StubMappingClient, build_mapping_prompt, map_chunk, parse_jsonld_graph
from ontorag.ontology import UNSPECIFIED, Ontology, load_ontology, parse_ontology
from ontorag.retrieval import RetrievedContext, greedy_cover, relevant_nodes, retrieve
from ontorag.store import Store, open_store, preprocess

__version__ = "0.1.0"

__all__ = [
    "DocumentChunk", "EntityRef", "FactualBlock", "Relation", "chunk_documents", "rel",
    "HashingEmbeddingProvider", "IndexKind", "NodeIndex", "RemoteEmbeddingProvider", "embed", "top_k",
    "build_answer_prompt", "build_deduction_prompt",
    "Hyperedge", "Hypergraph", "Hypernode", "Provenance", "build_hypergraph", "flatten",
    "load_hypergraph", "save_hypergraph",
    "StubMappingClient", "build_mapping_prompt", "map_chunk", "parse_jsonld_graph",
    "UNSPECIFIED", "Ontology", "load_ontology", "parse_ontology",
    "RetrievedContext", "greedy_cover", "relevant_nodes", "retrieve",
    "Store", "open_store", "preprocess",
]
