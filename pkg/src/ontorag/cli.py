"""Command-line interface: ``ontorag preprocess | query | eval``.

Settings resolve as flags > ``ONTORAG_*`` environment variables >
``--config`` JSON file > built-in defaults.

Exit codes: 0 success, 1 usage error, 2 data/format error, 3 remote-service error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

from ontorag.embedding import EmbeddingError, HashingEmbeddingProvider, RemoteEmbeddingProvider
from ontorag.evaluation import CoverError, QuestionFileError, load_questions, run_eval
from ontorag.generation import answer, build_answer_prompt, build_deduction_prompt, load_rules
from ontorag.hypergraph import FlattenError, StoreFormatError
from ontorag.llm import EchoAnswerClient, LLMError, RemoteChatClient
from ontorag.mapping import MappingError, StubMappingClient
from ontorag.ontology import OntologyError, load_ontology
from ontorag.retrieval import retrieve
from ontorag.store import load_documents, open_store, preprocess

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_REMOTE = 0, 1, 2, 3

DEFAULTS: dict[str, Any] = {
    "store": None,
    "ontology": None,
    "docs": None,
    "k": 5,
    "L": 10,
    "pad_to_l": False,
    "chunk_budget": 12_000,
    "dedupe_subset_edges": True,
    "m": "2,5",
    "methods": "og,rag",
    "llm_endpoint": None,
    "embed_endpoint": None,
    "embed_model": "text-embedding-3-small",
    "map_model": "gpt-4o",
    "answer_model": "gpt-4o",
    "api_key_env": "OPENAI_API_KEY",
    "local_stub": False,
    "embed_dim": 256,
    "concurrency": 4,
}
_INT_KEYS = {"k", "L", "chunk_budget", "embed_dim", "concurrency"}
_BOOL_KEYS = {"pad_to_l", "dedupe_subset_edges", "local_stub"}


class UsageError(Exception):
    pass


class JsonLineFormatter(logging.Formatter):
    _skip = set(vars(logging.LogRecord("", 0, "", 0, "", (), None))) | {"message", "asctime"}

    def format(self, record: logging.LogRecord) -> str:
        payload = {"level": record.levelname.lower(), "logger": record.name, "msg": record.getMessage()}
        payload.update({k: v for k, v in vars(record).items() if k not in self._skip})
        return json.dumps(payload, ensure_ascii=False, default=str)


@dataclass
class RunConfig:
    store: Path | None = None
    ontology: Path | None = None
    docs: Path | None = None
    k: int = 5
    L: int = 10
    pad_to_l: bool = False
    chunk_budget: int = 12_000
    dedupe_subset_edges: bool = True
    m: list[int] = field(default_factory=lambda: [2, 5])
    methods: list[str] = field(default_factory=lambda: ["og", "rag"])
    llm_endpoint: str | None = None
    embed_endpoint: str | None = None
    embed_model: str = "text-embedding-3-small"
    map_model: str = "gpt-4o"
    answer_model: str = "gpt-4o"
    api_key_env: str = "OPENAI_API_KEY"
    local_stub: bool = False
    embed_dim: int = 256
    concurrency: int = 4

    def validate(self) -> None:
        if self.k < 1:
            raise UsageError("--k must be >= 1")
        if self.L < 1:
            raise UsageError("--L must be >= 1")
        if self.chunk_budget <= 0:
            raise UsageError("--chunk-budget must be > 0")
        if not self.m or any(m < 1 for m in self.m):
            raise UsageError("--m values must be >= 1")
        if set(self.methods) - {"og", "rag"} or not self.methods:
            raise UsageError("--methods accepts og and rag")
        if self.concurrency < 1:
            raise UsageError("--concurrency must be >= 1")


def _coerce(key: str, value: Any) -> Any:
    if value is None:
        return None
    if key in _INT_KEYS:
        try:
            return int(value)
        except (TypeError, ValueError):
            raise UsageError(f"{key} must be an integer, got {value!r}") from None
    if key in _BOOL_KEYS and isinstance(value, str):
        return value.strip().lower() in {"1", "true", "yes", "on"}
    return value


def resolve_config(args: argparse.Namespace, environ: dict[str, str] | None = None) -> RunConfig:
    environ = os.environ if environ is None else environ
    merged = dict(DEFAULTS)
    if getattr(args, "config", None):
        try:
            file_cfg = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config file {args.config}: {exc}") from None
        unknown = set(file_cfg) - set(DEFAULTS)
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
        merged.update({k: _coerce(k, v) for k, v in file_cfg.items()})
    for key in DEFAULTS:
        env_value = environ.get(f"ONTORAG_{key.upper()}")
        if env_value is not None:
            merged[key] = _coerce(key, env_value)
    for key in DEFAULTS:
        flag_value = getattr(args, key, None)
        if flag_value is not None:
            merged[key] = _coerce(key, flag_value)

    def as_list(v: Any) -> list[str]:
        return [x.strip() for x in v.split(",") if x.strip()] if isinstance(v, str) else [str(x) for x in v]

    try:
        ms = [int(x) for x in as_list(merged["m"])]
    except ValueError:
        raise UsageError(f"--m must be comma-separated integers, got {merged['m']!r}") from None
    cfg = RunConfig(
        store=Path(merged["store"]) if merged["store"] else None,
        ontology=Path(merged["ontology"]) if merged["ontology"] else None,
        docs=Path(merged["docs"]) if merged["docs"] else None,
        k=merged["k"],
        L=merged["L"],
        pad_to_l=bool(merged["pad_to_l"]),
        chunk_budget=merged["chunk_budget"],
        dedupe_subset_edges=bool(merged["dedupe_subset_edges"]),
        m=ms,
        methods=as_list(merged["methods"]),
        llm_endpoint=merged["llm_endpoint"],
        embed_endpoint=merged["embed_endpoint"],
        embed_model=merged["embed_model"],
        map_model=merged["map_model"],
        answer_model=merged["answer_model"],
        api_key_env=merged["api_key_env"],
        local_stub=bool(merged["local_stub"]),
        embed_dim=merged["embed_dim"],
        concurrency=merged["concurrency"],
    )
    cfg.validate()
    return cfg


def _api_key(cfg: RunConfig) -> str | None:
    return os.environ.get(cfg.api_key_env) if cfg.api_key_env else None


def make_provider(cfg: RunConfig):
    if cfg.local_stub:
        return HashingEmbeddingProvider(cfg.embed_dim)
    if not cfg.embed_endpoint:
        raise UsageError("--embed-endpoint is required unless --local-stub is given")
    return RemoteEmbeddingProvider(cfg.embed_endpoint, cfg.embed_model, _api_key(cfg))


def make_chat_client(cfg: RunConfig, purpose: str):
    if cfg.local_stub:
        return StubMappingClient() if purpose == "map" else EchoAnswerClient()
    if not cfg.llm_endpoint:
        raise UsageError("--llm-endpoint is required unless --local-stub is given")
    model = cfg.map_model if purpose == "map" else cfg.answer_model
    return RemoteChatClient(cfg.llm_endpoint, model, _api_key(cfg))


def _require(cfg: RunConfig, *names: str) -> None:
    for name in names:
        if getattr(cfg, name) is None:
            raise UsageError(f"--{name.replace('_', '-')} is required")


def cmd_preprocess(cfg: RunConfig, args: argparse.Namespace, out) -> int:
    _require(cfg, "store", "ontology", "docs")
    ontology = load_ontology(cfg.ontology)
    docs = load_documents(cfg.docs)
    result = preprocess(
        ontology,
        docs,
        make_chat_client(cfg, "map"),
        make_provider(cfg),
        cfg.store,
        chunk_budget=cfg.chunk_budget,
        dedupe_subset_edges=cfg.dedupe_subset_edges,
        context_definition=cfg.ontology.read_text(encoding="utf-8"),
        concurrency=cfg.concurrency,
    )
    h = result.store.hypergraph
    mapping = result.mapping
    out.write(f"documents: {len(docs)}\n")
    out.write(f"chunks: {result.store.meta['mapping']['chunks']} (failed: {len(mapping.failed_chunks)})\n")
    out.write(f"blocks: {len(mapping.blocks)}\n")
    out.write(f"edges: {len(h.edges)}\n")
    out.write(f"nodes: {len(h.nodes)}\n")
    return EXIT_OK


def _format_provenance(p) -> str:
    if p.doc_id is None:
        return p.block_id
    span = f" chars {p.char_span[0]}-{p.char_span[1]}" if p.char_span else ""
    return f"{p.doc_id}#{p.chunk_index}{span}"


def cmd_query(cfg: RunConfig, args: argparse.Namespace, out) -> int:
    _require(cfg, "store")
    store = open_store(cfg.store, make_provider(cfg))
    ctx = retrieve(store, args.query, cfg.k, cfg.L, cfg.pad_to_l)
    rules = load_rules(args.rules) if args.rules else None
    generated = None
    if args.answer:
        prompt = build_deduction_prompt(ctx, rules, args.query) if rules else build_answer_prompt(ctx, args.query)
        generated = answer(make_chat_client(cfg, "answer"), prompt, ctx)

    if args.json:
        doc = {"query": args.query, "context": ctx.to_dict()}
        if generated is not None:
            doc["answer"] = {"text": generated.text, "model": generated.model, "edge_ids": generated.edge_ids}
        out.write(json.dumps(doc, ensure_ascii=False, indent=2) + "\n")
        return EXIT_OK

    for edge, line in zip(ctx.edges, ctx.lines()):
        out.write(f"[edge {edge.edge_id}] {_format_provenance(edge.provenance)}\n{line}\n")
    if ctx.uncovered:
        out.write(f"({len(ctx.uncovered)} relevant node(s) left uncovered at L={cfg.L})\n")
    if generated is not None:
        out.write(f"\nAnswer ({generated.model}):\n{generated.text}\n")
    return EXIT_OK


def cmd_eval(cfg: RunConfig, args: argparse.Namespace, out) -> int:
    _require(cfg, "store")
    store = open_store(cfg.store, make_provider(cfg))
    questions = load_questions(args.questions)
    report = run_eval(store, questions, cfg.methods, cfg.k, cfg.L, cfg.pad_to_l, cfg.m)
    out_dir = Path(args.out) if args.out else cfg.store / "eval"
    written = report.write(out_dir, figures=not args.no_figures)
    for method, agg in report.aggregates().items():
        out.write(f"{method}: c_erec={agg['c_erec_mean']:.4f} n={agg['count']} "
                  f"context={agg['context_edges_mean']:.2f} latency_ms={agg['latency_ms_mean']:.2f}\n")
    for path in written:
        out.write(f"wrote {path}\n")
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse would exit 2, which is reserved for data errors
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    g = common.add_argument_group("store and inputs")
    g.add_argument("--config", help="JSON file with default settings")
    g.add_argument("--store", help="store directory")
    g.add_argument("--k", type=int, help="top-k hypernodes per index (default 5)")
    g.add_argument("--L", type=int, help="maximum hyperedges in a context (default 10)")
    g.add_argument("--pad-to-l", dest="pad_to_l", action="store_const", const=True,
                   help="fill unused context slots with the most relevant remaining edges")
    p = common.add_argument_group("providers")
    p.add_argument("--local-stub", dest="local_stub", action="store_const", const=True,
                   help="offline providers: rule-based mapper, hashed embeddings, echo answerer")
    p.add_argument("--llm-endpoint", help="base URL of a chat-completions API")
    p.add_argument("--embed-endpoint", help="base URL of an embeddings API")
    p.add_argument("--embed-model")
    p.add_argument("--embed-dim", type=int, help="dimension of the local hashed embedding (default 256)")
    p.add_argument("--map-model", help="model used to map documents onto the ontology")
    p.add_argument("--answer-model", help="model used to answer queries")
    p.add_argument("--api-key-env", help="environment variable holding the API key")
    p.add_argument("--concurrency", type=int, help="parallel remote requests (default 4)")
    p.add_argument("--log-level", default="WARNING")

    parser = _Parser(prog="ontorag", description="Ontology-grounded hypergraph retrieval.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    pre = sub.add_parser("preprocess", parents=[common], help="map documents and build the store")
    pre.add_argument("--ontology", help="ontology JSON file")
    pre.add_argument("--docs", help="directory of .txt/.md files, a .jsonl file, or one text file")
    pre.add_argument("--chunk-budget", dest="chunk_budget", type=int, help="max characters per chunk")
    pre.add_argument("--no-dedupe", dest="dedupe_subset_edges", action="store_const", const=False,
                     help="keep flattened blocks that are subsets of sibling blocks")

    q = sub.add_parser("query", parents=[common], help="retrieve facts for a query")
    q.add_argument("query")
    q.add_argument("--answer", action="store_true", help="also ask the answer model")
    q.add_argument("--rules", help="text file with one deduction rule per line")
    q.add_argument("--json", action="store_true", help="machine-readable output")

    ev = sub.add_parser("eval", parents=[common], help="score retrieval methods on a question file")
    ev.add_argument("questions", help="JSON array of questions")
    ev.add_argument("--methods", help="comma-separated: og,rag")
    ev.add_argument("--m", help="baseline chunk counts, comma-separated (default 2,5)")
    ev.add_argument("--out", help="report directory (default <store>/eval)")
    ev.add_argument("--no-figures", action="store_true", help="skip the PNG figures")
    return parser


COMMANDS = {"preprocess": cmd_preprocess, "query": cmd_query, "eval": cmd_eval}


def main(argv: Sequence[str] | None = None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(JsonLineFormatter())
    root = logging.getLogger("ontorag")
    root.handlers[:] = [handler]
    root.setLevel(str(args.log_level).upper())
    root.propagate = False

    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg, args, out)
    except UsageError as exc:
        print(f"ontorag: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except LLMError as exc:
        print(f"ontorag: remote service error: {exc}", file=sys.stderr)
        return EXIT_REMOTE
    except (OntologyError, StoreFormatError, MappingError, QuestionFileError, FlattenError,
            EmbeddingError, CoverError, FileNotFoundError, ValueError, OSError) as exc:
        print(f"ontorag: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
