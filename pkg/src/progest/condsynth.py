"""Condition synthesis: mining templates from a corpus and instantiating
them for a new context with the tree-search machinery.

A template is a condition with its variable occurrences abstracted into
numbered placeholder slots, typed by the declarations they were mined from.
For one target context the templates and the declared variables compile into
a rewriting-rule set; synthesis then runs the ordinary beam search over it.
The decision structure is fixed: pick the first variable (creation), pick
the template around it (upward expansion), fill the remaining slots left to
right (downward expansions).
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .errors import ContextError, MiniLangError, MiniTypeError
from .features import (
    Context,
    FeaturePipeline,
    StepPayload,
    TemplatePayload,
    extract_features,
)
from .grammar import (
    Annotation,
    Grammar,
    Production,
    RewritingRule,
    RuleKind,
    RuleSet,
    RuleTree,
    TypeAtom,
    nonterminal,
    terminal,
)
from .minilang import (
    join_tokens,
    parse_condition,
    split_logic_ops,
    tokens_with_vars,
    typecheck,
)
from .models import (
    ExtractionResult,
    FrequencyModel,
    LogisticModel,
    UniformModel,
    extract_training_set,
)
from .search import SearchResult, beam_search
from .trees import (
    AnnotatedAst,
    build_complete_ast,
    leaf_tokens,
    policy_leftmost,
)

EXPR_ROOT = "E"
_PLACEHOLDER_RE = re.compile(r"^V(\d+)$")
_VAR_RULE_RE = re.compile(r"^var(\d+):")


# --------------------------------------------------------------------------
# corpus records

@dataclass(frozen=True)
class CorpusRecord:
    id: str
    condition: str
    context: Context


def load_corpus(path: str) -> list[CorpusRecord]:
    """Read a JSONL corpus, validating and splitting as it goes.

    Conditions built from ``&&``/``||`` are split into their atoms, each
    atom becoming its own record with an ``#n`` id suffix.  Every atom must
    parse and typecheck Boolean under its context; ids must be unique.
    """
    records: list[CorpusRecord] = []
    seen_ids: set[str] = set()
    with open(path, "r", encoding="utf-8") as handle:
        for line_no, raw in enumerate(handle, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                data = json.loads(line)
            except json.JSONDecodeError as err:
                raise ContextError(f"line {line_no}: bad JSON ({err})") from None
            try:
                rec_id = str(data["id"])
                condition = data["condition"]
                ctx = Context.from_dict(data["context"])
            except (KeyError, TypeError) as err:
                raise ContextError(f"line {line_no}: bad record ({err})") from None
            if rec_id in seen_ids:
                raise ContextError(f"line {line_no}: duplicate id {rec_id!r}")
            seen_ids.add(rec_id)
            try:
                atoms = split_logic_ops(condition)
            except MiniLangError as err:
                raise ContextError(f"line {line_no}: {err}") from None
            for atom_idx, atom in enumerate(atoms, start=1):
                derived_id = rec_id if len(atoms) == 1 else f"{rec_id}#{atom_idx}"
                try:
                    result = typecheck(parse_condition(atom), ctx.variable_types)
                except (MiniLangError, MiniTypeError) as err:
                    raise ContextError(f"line {line_no}: {atom!r}: {err}") from None
                if result != "Boolean":
                    raise ContextError(
                        f"line {line_no}: {atom!r} has type {result}, not Boolean"
                    )
                records.append(CorpusRecord(derived_id, atom, ctx))
    return records


# --------------------------------------------------------------------------
# templates

@dataclass(frozen=True)
class Template:
    """A condition skeleton: placeholders V1..Vk plus concrete tokens."""

    key: str
    tokens: tuple[str, ...]
    placeholder_types: tuple[str, ...]
    count: int = 0

    @property
    def arity(self) -> int:
        return len(self.placeholder_types)

    @property
    def payload(self) -> TemplatePayload:
        return TemplatePayload(
            self.key, self.arity, self.tokens, self.placeholder_types
        )

    def to_dict(self) -> dict:
        return {
            "key": self.key,
            "tokens": list(self.tokens),
            "types": list(self.placeholder_types),
            "count": self.count,
        }

    @staticmethod
    def from_dict(data: Mapping) -> "Template":
        return Template(
            data["key"],
            tuple(data["tokens"]),
            tuple(data["types"]),
            int(data.get("count", 0)),
        )


def _abstract(condition: str, var_types: Mapping[str, str]):
    """Skeleton tokens, placeholder types, and variable names of one atom."""
    tagged = tokens_with_vars(parse_condition(condition))
    skeleton: list[str] = []
    types: list[str] = []
    names: list[str] = []
    for text, is_var in tagged:
        if is_var:
            declared = var_types.get(text)
            if declared is None:
                raise ContextError(f"variable {text!r} is not declared")
            types.append(declared)
            names.append(text)
            skeleton.append(f"V{len(types)}")
        else:
            skeleton.append(text)
    return tuple(skeleton), tuple(types), tuple(names)


def template_key(tokens: Sequence[str], types: Sequence[str]) -> str:
    return f"{' '.join(tokens)}::{','.join(types)}"


def template_of(record: CorpusRecord) -> Template:
    tokens, types, _names = _abstract(record.condition, record.context.variable_types)
    return Template(template_key(tokens, types), tokens, types, 1)


def mine_templates(records: Sequence[CorpusRecord]) -> tuple[Template, ...]:
    """Distinct templates of the corpus, most frequent first."""
    counts: dict[str, int] = {}
    shapes: dict[str, tuple[tuple[str, ...], tuple[str, ...]]] = {}
    for record in records:
        tokens, types, _ = _abstract(
            record.condition, record.context.variable_types
        )
        key = template_key(tokens, types)
        counts[key] = counts.get(key, 0) + 1
        shapes.setdefault(key, (tokens, types))
    ordered = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return tuple(
        Template(key, shapes[key][0], shapes[key][1], count) for key, count in ordered
    )


# --------------------------------------------------------------------------
# compiling templates + context into rules

_SCHEMA_VAR = TypeAtom("a")
_BOOLEAN = TypeAtom("Boolean")


def _leaf_rule_tree(symbol_name: str, var_name: str, *, upward: bool) -> RuleTree:
    mark = Annotation.U if upward else Annotation.NONE
    return RuleTree(
        nonterminal(symbol_name),
        mark,
        not upward,  # downward variant anchors at the slot node
        (RuleTree(terminal(var_name)),),
    )


def build_cond_ruleset(templates: Sequence[Template], ctx: Context) -> RuleSet:
    """Rules for synthesizing one condition in one context.

    Creation seeds the first variable (or a whole variable-free condition);
    each template with slots becomes an upward expansion anchored at the
    first slot; later slots are filled by per-variable downward rules.
    """
    if not templates:
        raise ContextError("no templates to synthesize from")
    rules: list[RewritingRule] = []
    max_arity = max(t.arity for t in templates)

    if max_arity >= 1:
        for var in ctx.variables:
            rules.append(
                RewritingRule(
                    len(rules),
                    RuleKind.CREATION,
                    None,
                    _leaf_rule_tree("V1", var.name, upward=True),
                    key=f"make-var:{var.name}",
                    schema=((0, _SCHEMA_VAR), (1, _SCHEMA_VAR)),
                )
            )
    for t in templates:
        if t.arity == 0:
            rules.append(
                RewritingRule(
                    len(rules),
                    RuleKind.CREATION,
                    None,
                    RuleTree(
                        nonterminal(EXPR_ROOT),
                        Annotation.U,
                        False,
                        tuple(RuleTree(terminal(tok)) for tok in t.tokens),
                    ),
                    key=f"make-expr:{t.key}",
                    schema=((0, _BOOLEAN),),
                )
            )
    for t in templates:
        if t.arity == 0:
            continue
        children: list[RuleTree] = []
        schema: list[tuple[int, TypeAtom]] = [(0, _BOOLEAN)]
        slot = 0
        for pos, token in enumerate(t.tokens):
            m = _PLACEHOLDER_RE.match(token)
            if m:
                slot += 1
                schema.append((pos + 1, TypeAtom(t.placeholder_types[slot - 1])))
                if slot == 1:
                    children.append(RuleTree(nonterminal("V1"), Annotation.NONE, True))
                else:
                    children.append(RuleTree(nonterminal(f"V{slot}"), Annotation.D))
            else:
                children.append(RuleTree(terminal(token)))
        rules.append(
            RewritingRule(
                len(rules),
                RuleKind.BOTTOM_UP,
                (nonterminal("V1"), Annotation.U),
                RuleTree(nonterminal(EXPR_ROOT), Annotation.NONE, False, tuple(children)),
                key=f"expr:{t.key}",
                schema=tuple(schema),
            )
        )
    for position in range(2, max_arity + 1):
        for var in ctx.variables:
            rules.append(
                RewritingRule(
                    len(rules),
                    RuleKind.TOP_DOWN,
                    (nonterminal(f"V{position}"), Annotation.D),
                    _leaf_rule_tree(f"V{position}", var.name, upward=False),
                    key=f"var{position}:{var.name}",
                    schema=((0, _SCHEMA_VAR), (1, _SCHEMA_VAR)),
                )
            )
    if any(t.arity == 0 for t in templates):
        rules.append(
            RewritingRule(
                len(rules),
                RuleKind.BOTTOM_UP,
                (nonterminal(EXPR_ROOT), Annotation.U),
                RuleTree(nonterminal(EXPR_ROOT), Annotation.NONE, True),
                key=f"fin:{EXPR_ROOT}",
            )
        )
    return RuleSet(rules)


def build_cond_grammar(
    templates: Sequence[Template], variable_names: Sequence[str]
) -> Grammar:
    """Companion grammar generating exactly the instantiable conditions.

    Used to enumerate complete trees when certifying that the compiled rule
    set builds each of them one way only.
    """
    if not templates:
        raise ContextError("no templates")
    max_arity = max(t.arity for t in templates)
    productions: list[Production] = []
    for t in templates:
        rhs = []
        slot = 0
        for token in t.tokens:
            if _PLACEHOLDER_RE.match(token):
                slot += 1
                rhs.append(nonterminal(f"V{slot}"))
            else:
                rhs.append(terminal(token))
        productions.append(Production(nonterminal(EXPR_ROOT), tuple(rhs)))
    for position in range(1, max_arity + 1):
        for name in variable_names:
            productions.append(
                Production(nonterminal(f"V{position}"), (terminal(name),))
            )
    return Grammar(tuple(productions), nonterminal(EXPR_ROOT))


def certification_bound(templates: Sequence[Template]) -> int:
    """Node count of the largest single-template tree; trees past one
    template per condition cannot exist in this rule space."""
    return max(1 + len(t.tokens) + t.arity for t in templates)


def record_tree(record: CorpusRecord) -> AnnotatedAst:
    """The finished tree the rule set would build for this record."""
    tokens, types, names = _abstract(
        record.condition, record.context.variable_types
    )
    children = []
    slot = 0
    for token in tokens:
        if _PLACEHOLDER_RE.match(token):
            slot += 1
            children.append(
                (nonterminal(f"V{slot}"), ((terminal(names[slot - 1]), ()),))
            )
        else:
            children.append((terminal(token), ()))
    return build_complete_ast((nonterminal(EXPR_ROOT), tuple(children)))


def render_condition(ast: AnnotatedAst) -> str:
    return join_tokens(leaf_tokens(ast))


# --------------------------------------------------------------------------
# mapping decision points to payloads

def step_kind(candidates: Sequence[RewritingRule]) -> str:
    if not candidates:
        return "other"
    key = candidates[0].key
    if key.startswith("make-var:") or key.startswith("make-expr:"):
        return "creation"
    if key.startswith("expr:"):
        return "expression"
    if _VAR_RULE_RE.match(key):
        return "variable"
    return "other"


class CondStepResolver:
    """Resolves a decision point into featurizable payloads, structurally.

    Everything is read off the rules and the current tree: the candidate
    variable from a creation or slot rule's leaf, the chosen first variable
    from under the V1 node, the template of a slot step from the key of the
    rule that introduced the slot.
    """

    def __init__(self, templates: Sequence[Template]):
        self.by_key = {t.key: t for t in templates}

    def _template_payload(self, key: str) -> TemplatePayload | None:
        t = self.by_key.get(key)
        return t.payload if t is not None else None

    def _var(self, ctx: Context | None, name: str):
        if ctx is None:
            return None
        try:
            return ctx.variable(name)
        except ContextError:
            return None

    def _bound_var(self, ctx: Context | None, ast: AnnotatedAst, symbol_name: str):
        for nid in ast.preorder():
            node = ast.nodes[nid]
            if node.symbol == nonterminal(symbol_name) and node.children:
                leaf = ast.nodes[node.children[0]]
                return self._var(ctx, leaf.symbol.name)
        return None

    def __call__(
        self,
        ctx: Context | None,
        ast: AnnotatedAst,
        node: int | None,
        candidates: Sequence[RewritingRule],
    ) -> tuple[str, list[StepPayload]]:
        kind = step_kind(candidates)
        payloads: list[StepPayload] = []
        if kind == "creation":
            for rule in candidates:
                if rule.key.startswith("make-var:"):
                    name = rule.key[len("make-var:"):]
                    payloads.append(
                        StepPayload("creation", ctx, variable=self._var(ctx, name))
                    )
                else:
                    tkey = rule.key[len("make-expr:"):]
                    payloads.append(
                        StepPayload(
                            "creation", ctx, template=self._template_payload(tkey)
                        )
                    )
            return kind, payloads
        if kind == "expression":
            chosen = self._bound_var(ctx, ast, "V1")
            for rule in candidates:
                tkey = rule.key[len("expr:"):]
                payloads.append(
                    StepPayload(
                        "expression",
                        ctx,
                        chosen=chosen,
                        template=self._template_payload(tkey),
                    )
                )
            return kind, payloads
        if kind == "variable":
            position = int(_VAR_RULE_RE.match(candidates[0].key).group(1))
            previous = self._bound_var(ctx, ast, f"V{position - 1}")
            origin = ast.nodes[node].origin if node is not None else None
            template = None
            if origin and origin.startswith("expr:"):
                template = self._template_payload(origin[len("expr:"):])
            for rule in candidates:
                name = rule.replacement.children[0].symbol.name
                payloads.append(
                    StepPayload(
                        "variable",
                        ctx,
                        variable=self._var(ctx, name),
                        previous=previous,
                        template=template,
                        position=position,
                    )
                )
            return kind, payloads
        return kind, [StepPayload("creation", ctx) for _ in candidates]


def make_encoder(resolver: CondStepResolver, pipeline: FeaturePipeline):
    def encode(ctx, ast, node, candidates):
        kind, payloads = resolver(ctx, ast, node, candidates)
        if kind == "other":
            return kind, [None] * len(candidates)
        return kind, [extract_features(p, pipeline) for p in payloads]

    return encode


# --------------------------------------------------------------------------
# training and synthesis

MODEL_KINDS = ("frequency", "logistic", "uniform", "table")


@dataclass
class TrainedCond:
    """Everything needed to synthesize: templates plus a fitted model."""

    model_kind: str
    templates: tuple[Template, ...]
    pipeline: FeaturePipeline | None = None
    frequency: FrequencyModel | None = None
    logistic: LogisticModel | None = None
    extraction: ExtractionResult | None = None

    @property
    def model(self):
        if self.model_kind == "frequency":
            return self.frequency
        if self.model_kind == "logistic":
            return self.logistic
        return UniformModel()


def train_cond_models(
    records: Sequence[CorpusRecord],
    *,
    model_kind: str = "frequency",
    pca_dims: int = 16,
    seed: int = 12345,
    size_limit: int = 30,
    lr: float = 0.4,
    epochs: int = 450,
) -> TrainedCond:
    """Mine templates from the records and fit the requested model on them."""
    if model_kind not in ("frequency", "logistic", "uniform"):
        raise ContextError(f"cannot train a {model_kind!r} model")
    templates = mine_templates(records)
    if not templates:
        raise ContextError("corpus yielded no templates")
    items = [(r.context, record_tree(r)) for r in records]

    def rules_for(ctx: Context) -> RuleSet:
        return build_cond_ruleset(templates, ctx)

    if model_kind == "uniform":
        return TrainedCond("uniform", templates)
    if model_kind == "frequency":
        extraction = extract_training_set(
            items, rules_for, policy_leftmost, size_limit=size_limit
        )
        return TrainedCond(
            "frequency",
            templates,
            frequency=FrequencyModel.fit(extraction.instances),
            extraction=extraction,
        )
    pipeline = FeaturePipeline.fit((r.context for r in records), pca_dims, seed)
    resolver = CondStepResolver(templates)
    extraction = extract_training_set(
        items,
        rules_for,
        policy_leftmost,
        encoder=make_encoder(resolver, pipeline),
        size_limit=size_limit,
    )
    logistic = LogisticModel.train(
        extraction.instances, pipeline, resolver, lr=lr, epochs=epochs
    )
    return TrainedCond(
        "logistic", templates, pipeline=pipeline, logistic=logistic,
        extraction=extraction,
    )


def synthesize_condition(
    ctx: Context,
    templates: Sequence[Template],
    model,
    *,
    k: int = 50,
    widths: Sequence[int] = (5, 200),
    size_limit: int = 30,
    anti_patterns: Sequence = (),
    step_cap: int = 100_000,
) -> SearchResult:
    """Rank condition candidates for one context."""
    rs = build_cond_ruleset(templates, ctx)
    return beam_search(
        rs,
        ctx,
        model,
        widths=widths,
        k=k,
        size_limit=size_limit,
        anti_patterns=anti_patterns,
        step_cap=step_cap,
        renderer=render_condition,
    )


# --------------------------------------------------------------------------
# evaluation

@dataclass
class EvalReport:
    model_kind: str
    repeats: int
    split_ratio: float
    seed: int
    k: int
    n_records: int
    n_train: int
    n_test: int
    tested: int  # test slots over all repeats
    solved: dict[int, int]  # cutoff -> hits over all repeats
    precision: dict[int, float]
    unreachable: int
    per_repeat: list[dict] = field(default_factory=list)


def evaluate_topk(
    records: Sequence[CorpusRecord],
    *,
    model_kind: str = "frequency",
    split_ratio: float = 0.1,
    seed: int = 0,
    repeats: int = 1,
    k: int = 50,
    widths: Sequence[int] = (5, 200),
    pca_dims: int = 16,
    size_limit: int = 30,
) -> EvalReport:
    """Held-out ranking accuracy, averaged over seeded shuffles.

    A test condition whose template was never mined from the training split
    cannot be produced at all; it counts as a miss at every cutoff and goes
    into ``unreachable``.
    """
    import random

    if not records:
        raise ContextError("empty corpus")
    cutoffs = sorted({1, 10, k})
    totals = {c: 0.0 for c in cutoffs}
    solved = {c: 0 for c in cutoffs}
    unreachable_total = 0
    per_repeat: list[dict] = []
    n_test = max(1, round(len(records) * split_ratio))
    for rep in range(repeats):
        rng = random.Random(seed + rep)
        order = list(range(len(records)))
        rng.shuffle(order)
        test_idx = order[:n_test]
        train_idx = order[n_test:]
        trained = train_cond_models(
            [records[i] for i in train_idx],
            model_kind=model_kind,
            pca_dims=pca_dims,
            seed=seed + rep,
            size_limit=size_limit,
        )
        known = {t.key for t in trained.templates}
        hits = {c: 0 for c in cutoffs}
        unreachable = 0
        for i in test_idx:
            record = records[i]
            target = join_tokens(
                [t for t, _ in tokens_with_vars(parse_condition(record.condition))]
            )
            try:
                t = template_of(record)
            except ContextError:
                unreachable += 1
                continue
            if t.key not in known:
                unreachable += 1
                continue
            result = synthesize_condition(
                record.context,
                trained.templates,
                trained.model,
                k=k,
                widths=widths,
                size_limit=size_limit,
            )
            rank = None
            for pos, cand in enumerate(result.candidates, start=1):
                if cand.rendered == target:
                    rank = pos
                    break
            for c in cutoffs:
                if rank is not None and rank <= c:
                    hits[c] += 1
        for c in cutoffs:
            totals[c] += hits[c] / n_test
            solved[c] += hits[c]
        unreachable_total += unreachable
        per_repeat.append(
            {"repeat": rep, "hits": dict(hits), "unreachable": unreachable}
        )
    precision = {c: totals[c] / repeats for c in cutoffs}
    return EvalReport(
        model_kind=model_kind,
        repeats=repeats,
        split_ratio=split_ratio,
        seed=seed,
        k=k,
        n_records=len(records),
        n_train=len(records) - n_test,
        n_test=n_test,
        tested=n_test * repeats,
        solved=solved,
        precision=precision,
        unreachable=unreachable_total,
        per_repeat=per_repeat,
    )
