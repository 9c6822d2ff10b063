"""Prompt assembly and answering over a retrieved context."""

from __future__ import annotations

import time
from dataclasses import dataclass
from pathlib import Path

from ontorag.hypergraph import Provenance
from ontorag.llm import LanguageModelClient, LLMError
from ontorag.retrieval import RetrievedContext, render_context

ANSWER_PROMPT_TEMPLATE = (
    "Given the context below, generate the answer to the given query. "
    "Note that the context is provided as a list of valid facts in a dictionary format.\n"
    "Context: {context}\n"
    "Query: {query}\n"
    "Answer:"
)

DEDUCTION_PROMPT_TEMPLATE = (
    "Given the following data and a set of deductive rules, answer the question below "
    "by applying the rules on the data.\n"
    "Data: {data}\n"
    "Rules: {rules}\n"
    "Question: {question}\n"
    "Answer:"
)


def build_answer_prompt(ctx: RetrievedContext, query: str) -> str:
    return ANSWER_PROMPT_TEMPLATE.format(context=render_context(ctx), query=query)


def format_rules(rules: list[str]) -> str:
    return "\n".join(f"{i}. {rule}" for i, rule in enumerate(rules, 1))


def build_deduction_prompt(ctx: RetrievedContext, rules: list[str], query: str) -> str:
    if not rules:
        raise ValueError("deduction needs at least one rule")
    return DEDUCTION_PROMPT_TEMPLATE.format(data=render_context(ctx), rules=format_rules(rules), question=query)


def load_rules(path: str | Path) -> list[str]:
    """One rule per non-blank line; surrounding whitespace trimmed."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return [ln.strip() for ln in lines if ln.strip()]


@dataclass
class GeneratedAnswer:
    text: str
    model: str
    edge_ids: list[int]
    provenance: list[Provenance]
    seconds: float


def answer(client: LanguageModelClient, prompt: str, ctx: RetrievedContext) -> GeneratedAnswer:
    start = time.perf_counter()
    text = client.complete(prompt)
    if not text or not text.strip():
        raise LLMError("empty completion")
    return GeneratedAnswer(
        text=text,
        model=getattr(client, "model", "unknown"),
        edge_ids=ctx.edge_ids,
        provenance=[e.provenance for e in ctx.edges],
        seconds=time.perf_counter() - start,
    )
