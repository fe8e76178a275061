"""Most-likely-tree search driven by a probability model.

States are partial annotated trees with the log probability of the rule
choices that built them.  Each round expands every live state at the node
its policy picks, keeps the locally best successors, then truncates the pool
to the round's beam width.  Widths are given per round; the last entry
repeats, so ``(5, 200)`` means a tight first pick and a wide tail.

All tie-breaking is total and value-based (never by node identity), which
keeps results reproducible across runs and processes.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from math import exp, inf, log
from typing import Callable, Sequence

from .constraints import compute_size_bounds, probe_rules
from .errors import SearchOverflowError
from .features import Context
from .grammar import Annotation, RuleSet
from .trees import (
    AnnotatedAst,
    Application,
    expandable_nodes,
    is_complete,
    policy_leftmost,
    reconstruct_applications,
    render,
    to_sexpr,
)

Policy = Callable[[AnnotatedAst], tuple[int, Annotation]]
Renderer = Callable[[AnnotatedAst], str]


def make_hash_policy(seed: int) -> Policy:
    """A deterministic pseudo-random node order, stable across processes.

    Nodes are ranked by hashing the seed with the node's child-index path
    from the root and the direction, so the order depends only on tree shape.
    Nodes marked both ways may expand in either direction.
    """

    def path_of(ast: AnnotatedAst, nid: int) -> tuple[int, ...]:
        path: list[int] = []
        while ast.nodes[nid].parent is not None:
            parent = ast.nodes[nid].parent  # type: ignore[assignment]
            path.append(ast.nodes[parent].children.index(nid))
            nid = parent
        return tuple(reversed(path))

    def policy(ast: AnnotatedAst) -> tuple[int, Annotation]:
        best: tuple[str, int, Annotation] | None = None
        for nid, mark in expandable_nodes(ast):
            path = path_of(ast, nid)
            for direction in (Annotation.U, Annotation.D):
                if direction is Annotation.U and not mark.needs_up:
                    continue
                if direction is Annotation.D and not mark.needs_down:
                    continue
                digest = hashlib.sha256(
                    f"{seed}|{path}|{direction.value}".encode()
                ).hexdigest()
                entry = (digest, nid, direction)
                if best is None or entry < best:
                    best = entry
        if best is None:
            raise ValueError("tree has no expandable node")
        return best[1], best[2]

    return policy


# --------------------------------------------------------------------------
# result filtering

@dataclass(frozen=True)
class AntiPattern:
    """A rendered form to suppress from final candidates."""

    name: str
    pattern: str

    def matches(self, rendered: str) -> bool:
        return re.search(self.pattern, rendered) is not None


# a bare null check is almost never the condition being looked for
DEFAULT_ANTI_PATTERNS: tuple[AntiPattern, ...] = (
    AntiPattern("bare-null-check", r"^[A-Za-z_$][A-Za-z0-9_$]*\s*!=\s*null$"),
)


def anti_pattern_check(rendered: str, patterns: Sequence[AntiPattern]) -> bool:
    """True when the rendered candidate is acceptable (matches nothing)."""
    return not any(p.matches(rendered) for p in patterns)


# --------------------------------------------------------------------------
# search state

@dataclass
class SearchStats:
    expansions: int = 0
    constraint_pruned: int = 0
    size_pruned: int = 0
    zero_prob_pruned: int = 0
    anti_pattern_pruned: int = 0
    beam_truncated: int = 0
    step_cap_hit: bool = False


@dataclass(frozen=True)
class Candidate:
    ast: AnnotatedAst
    rendered: str
    log_prob: float
    applications: tuple[Application, ...]

    @property
    def prob(self) -> float:
        return exp(self.log_prob) if self.log_prob > -inf else 0.0


@dataclass
class SearchResult:
    candidates: list[Candidate] = field(default_factory=list)
    stats: SearchStats = field(default_factory=SearchStats)


def _step_candidates(rs: RuleSet, ast: AnnotatedAst, policy: Policy):
    if ast.is_empty:
        return None, list(rs.creation_rules)
    node, direction = policy(ast)
    return node, list(rs.rules_for(ast.nodes[node].symbol, direction))


def beam_search(
    rs: RuleSet,
    ctx: Context | None,
    model,
    *,
    policy: Policy = policy_leftmost,
    widths: Sequence[int] = (5, 200),
    k: int = 10,
    size_limit: int | None = 30,
    anti_patterns: Sequence[AntiPattern] = DEFAULT_ANTI_PATTERNS,
    rule_cap: int | None = None,
    step_cap: int = 100_000,
    renderer: Renderer | None = None,
) -> SearchResult:
    """Beam search for the ``k`` most probable finished trees.

    Probabilities multiply over steps exactly as the model reports them; the
    fitted models normalize per candidate list, fixtures may not.  Finished
    states leave the beam, get anti-pattern screened, and are ranked at the
    end, so a slow completion can still outrank an early one.
    """
    if not widths or any(w < 1 for w in widths):
        raise ValueError("widths must be a non-empty sequence of positive ints")
    stats = SearchStats()
    render_fn = renderer or render
    var_types = ctx.variable_types if ctx is not None else None
    result_type = ctx.result_type if ctx is not None else None
    bounds = compute_size_bounds(rs) if size_limit is not None else None
    results: list[Candidate] = []
    # state: tree, log prob, applications so far, accumulated schema pins
    states: list[tuple[AnnotatedAst, float, tuple[Application, ...], tuple]] = [
        (AnnotatedAst.empty(), 0.0, (), ())
    ]
    round_idx = 0
    while states:
        width = widths[min(round_idx, len(widths) - 1)]
        successors: list[tuple[AnnotatedAst, float, tuple[Application, ...], tuple]] = []
        for ast, log_prob, apps, pins in states:
            if not ast.is_empty and is_complete(ast):
                text = render_fn(ast)
                if anti_pattern_check(text, anti_patterns):
                    results.append(Candidate(ast, text, log_prob, apps))
                else:
                    stats.anti_pattern_pruned += 1
                continue
            if stats.expansions >= step_cap:
                stats.step_cap_hit = True
                continue
            stats.expansions += 1
            node, group = _step_candidates(rs, ast, policy)
            if not group:
                continue
            outcome = probe_rules(
                ast,
                node,
                group,
                var_types=var_types,
                result_type=result_type,
                bounds=bounds,
                size_limit=size_limit,
                base_constraints=pins,
            )
            stats.size_pruned += outcome.size_pruned
            stats.constraint_pruned += outcome.constraint_pruned
            if not outcome.kept:
                continue
            probs = model.predict(ctx, ast, node, [p.rule for p in outcome.kept])
            scored = []
            for probe, p in zip(outcome.kept, probs):
                if p <= 0.0:
                    stats.zero_prob_pruned += 1
                    continue
                scored.append((log_prob + log(p), probe))
            cap = rule_cap if rule_cap is not None else width
            scored.sort(key=lambda item: (-item[0], item[1].rule.id))
            if len(scored) > cap:
                stats.beam_truncated += len(scored) - cap
                scored = scored[:cap]
            for new_log, probe in scored:
                successors.append(
                    (
                        probe.ast,
                        new_log,
                        apps + (Application(node, probe.rule.id),),
                        pins + probe.constraints,
                    )
                )
        successors.sort(
            key=lambda s: (-s[1], to_sexpr(s[0]), tuple(a.rule for a in s[2]))
        )
        if len(successors) > width:
            stats.beam_truncated += len(successors) - width
            successors = successors[:width]
        states = successors
        round_idx += 1
    results.sort(
        key=lambda c: (-c.log_prob, c.rendered, tuple(a.rule for a in c.applications))
    )
    return SearchResult(results[:k], stats)


def exhaustive_search(
    rs: RuleSet,
    ctx: Context | None = None,
    *,
    policy: Policy = policy_leftmost,
    size_limit: int | None = None,
    state_cap: int = 1_000_000,
    model=None,
    anti_patterns: Sequence[AntiPattern] = (),
    renderer: Renderer | None = None,
) -> SearchResult:
    """Every finished tree reachable under the pruning, in stable order.

    Meant for small spaces (oracle comparisons, exactness checks); raises
    ``SearchOverflowError`` past ``state_cap`` visited states.  Without a
    model all log probabilities are zero.
    """
    stats = SearchStats()
    render_fn = renderer or render
    var_types = ctx.variable_types if ctx is not None else None
    result_type = ctx.result_type if ctx is not None else None
    bounds = compute_size_bounds(rs) if size_limit is not None else None
    results: list[Candidate] = []
    stack: list[tuple[AnnotatedAst, float, tuple[Application, ...], tuple]] = [
        (AnnotatedAst.empty(), 0.0, (), ())
    ]
    visited = 0
    while stack:
        ast, log_prob, apps, pins = stack.pop()
        visited += 1
        if visited > state_cap:
            raise SearchOverflowError(
                f"exhaustive search exceeded {state_cap} states"
            )
        if not ast.is_empty and is_complete(ast):
            text = render_fn(ast)
            if anti_pattern_check(text, anti_patterns):
                results.append(Candidate(ast, text, log_prob, apps))
            else:
                stats.anti_pattern_pruned += 1
            continue
        stats.expansions += 1
        node, group = _step_candidates(rs, ast, policy)
        if not group:
            continue
        outcome = probe_rules(
            ast,
            node,
            group,
            var_types=var_types,
            result_type=result_type,
            bounds=bounds,
            size_limit=size_limit,
            base_constraints=pins,
        )
        stats.size_pruned += outcome.size_pruned
        stats.constraint_pruned += outcome.constraint_pruned
        if not outcome.kept:
            continue
        if model is not None:
            probs = model.predict(ctx, ast, node, [p.rule for p in outcome.kept])
        else:
            probs = [1.0] * len(outcome.kept)
        for probe, p in reversed(list(zip(outcome.kept, probs))):
            if model is not None and p <= 0.0:
                stats.zero_prob_pruned += 1
                continue
            new_log = log_prob + (log(p) if model is not None else 0.0)
            stack.append(
                (
                    probe.ast,
                    new_log,
                    apps + (Application(node, probe.rule.id),),
                    pins + probe.constraints,
                )
            )
    results.sort(
        key=lambda c: (-c.log_prob, c.rendered, tuple(a.rule for a in c.applications))
    )
    return SearchResult(results, stats)


def program_log_probability(
    tree: AnnotatedAst,
    rs: RuleSet,
    model,
    ctx: Context | None = None,
    *,
    policy: Policy = policy_leftmost,
    size_limit: int | None = None,
) -> float:
    """Log probability the model assigns to the unique build of ``tree``.

    Replays the reconstruction and multiplies the model's scores over the
    feasible candidate list of each step.  Comes back ``-inf`` when some step
    of the true build is pruned away or scored zero.
    """
    var_types = ctx.variable_types if ctx is not None else None
    result_type = ctx.result_type if ctx is not None else None
    bounds = compute_size_bounds(rs) if size_limit is not None else None
    apps = reconstruct_applications(tree, rs, policy)
    ast = AnnotatedAst.empty()
    pins: tuple = ()
    total = 0.0
    for app in apps:
        rule = rs[app.rule]
        node, group = _step_candidates(rs, ast, policy)
        outcome = probe_rules(
            ast,
            node,
            group,
            var_types=var_types,
            result_type=result_type,
            bounds=bounds,
            size_limit=size_limit,
            base_constraints=pins,
        )
        chosen = None
        kept_rules = [p.rule for p in outcome.kept]
        for probe in outcome.kept:
            if probe.rule.key == rule.key:
                chosen = probe
                break
        if chosen is None:
            return -inf
        probs = model.predict(ctx, ast, node, kept_rules)
        p = probs[kept_rules.index(chosen.rule)]
        if p <= 0.0:
            return -inf
        total += log(p)
        ast = chosen.ast
        pins = pins + chosen.constraints
    return total


def program_probability(
    tree: AnnotatedAst,
    rs: RuleSet,
    model,
    ctx: Context | None = None,
    *,
    policy: Policy = policy_leftmost,
    size_limit: int | None = None,
) -> float:
    lp = program_log_probability(
        tree, rs, model, ctx, policy=policy, size_limit=size_limit
    )
    return exp(lp) if lp > -inf else 0.0
