"""Exhaustive ambiguity checking for rewriting-rule sets.

A rule set is unambiguous (up to a size bound) when no complete tree within
the bound has two essentially different build histories.  Two histories count
as the same when they apply the same rules at the same tree positions, no
matter in which order the marked nodes were processed.

The check enumerates complete trees of the grammar in size order and, for
each, walks every possible history with the backtracking machinery from
``trees``.  The first tree with two distinct histories yields a replayable
witness.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import inf

from .errors import UnderivableTreeError
from .grammar import Grammar, RuleSet, Symbol
from .trees import (
    AnnotatedAst,
    Application,
    DerivationStep,
    build_complete_ast,
    iter_derivations,
    policy_leftmost,
    render,
)

_CREATE_SLOT = -1  # pseudo node key for the creation entry of a history table


def minimum_tree_sizes(g: Grammar) -> dict[Symbol, float]:
    """Smallest complete-tree node count per symbol; inf for dead symbols."""
    sizes: dict[Symbol, float] = {t: 1.0 for t in g.terminals}
    for nt in g.nonterminals:
        sizes[nt] = inf
    changed = True
    while changed:
        changed = False
        for prod in g.productions:
            total = 1.0 + sum(sizes[s] for s in prod.rhs)
            if total < sizes[prod.lhs]:
                sizes[prod.lhs] = total
                changed = True
    return sizes


def enumerate_complete_trees(g: Grammar, max_nodes: int):
    """Yield every complete tree of ``g`` with at most ``max_nodes`` nodes.

    Trees come out in ascending node count; within one size the order follows
    production order, so runs are reproducible.
    """
    mins = minimum_tree_sizes(g)
    memo: dict[tuple[Symbol, int], list] = {}

    def shapes(sym: Symbol, n: int) -> list:
        key = (sym, n)
        cached = memo.get(key)
        if cached is not None:
            return cached
        out: list = []
        if sym.is_terminal:
            if n == 1:
                out.append((sym, ()))
        else:
            for prod in g.productions_for(sym):
                out.extend((sym, kids) for kids in fill(prod.rhs, n - 1))
        memo[key] = out
        return out

    def fill(symbols: tuple[Symbol, ...], budget: int) -> list:
        if not symbols:
            return [()] if budget == 0 else []
        first, rest = symbols[0], symbols[1:]
        first_min = mins[first]
        rest_min = sum(mins[s] for s in rest)
        if first_min == inf or rest_min == inf:
            return []
        results: list = []
        for take in range(int(first_min), int(budget - rest_min) + 1):
            heads = shapes(first, take)
            if not heads:
                continue
            for tail in fill(rest, budget - take):
                results.extend((head,) + tail for head in heads)
        return results

    for n in range(1, max_nodes + 1):
        for shape in shapes(g.root, n):
            yield build_complete_ast(shape)


def _history_table(steps: list[DerivationStep], rs: RuleSet) -> dict:
    """Order-free summary of one derivation: what was applied where."""
    table: dict[int, list] = {}
    for s in steps:
        if s.direction is None:
            table.setdefault(_CREATE_SLOT, []).append(
                (rs[s.application.rule].key, s.introduced)
            )
        else:
            table.setdefault(s.target_node, []).append(
                (s.direction.value, rs[s.application.rule].key)
            )
    return {k: tuple(sorted(v)) for k, v in table.items()}


def _freeze(table: dict) -> tuple:
    return tuple(sorted(table.items()))


@dataclass(frozen=True)
class Witness:
    """Two distinct build histories for the same tree.

    ``node`` is the first tree position (preorder) where they disagree, and
    ``rule_a``/``rule_b`` name the clashing choices there.  Replaying either
    application sequence from the empty tree reproduces ``tree``.
    """

    tree: AnnotatedAst
    rendered: str
    node: int
    rule_a: str
    rule_b: str
    derivation_a: tuple[Application, ...]
    derivation_b: tuple[Application, ...]


@dataclass(frozen=True)
class AmbiguityReport:
    unambiguous: bool
    max_nodes: int
    trees_checked: int
    derivations_checked: int
    underivable_trees: int
    witness: Witness | None = None


def _intro_map(steps: list[DerivationStep], rs: RuleSet) -> dict[int, str]:
    out: dict[int, str] = {}
    for s in steps:
        key = rs[s.application.rule].key
        for tid in s.introduced:
            out.setdefault(tid, key)
    return out


def _describe(entries, index: int, intro: dict[int, str], tid: int) -> str:
    if entries is not None and index < len(entries):
        item = entries[index]
        return item[1] if len(item) == 2 else item[0]
    return intro.get(tid, "(not applied)")


def _build_witness(
    tree: AnnotatedAst,
    table_a: dict,
    steps_a: list[DerivationStep],
    table_b: dict,
    steps_b: list[DerivationStep],
    rs: RuleSet,
) -> Witness:
    intro_a = _intro_map(steps_a, rs)
    intro_b = _intro_map(steps_b, rs)
    node = tree.root if tree.root is not None else 0
    rule_a = rule_b = "(creation)"
    create_a = table_a.get(_CREATE_SLOT)
    create_b = table_b.get(_CREATE_SLOT)
    if create_a != create_b:
        node = create_a[0][1][0] if create_a and create_a[0][1] else node
        rule_a = create_a[0][0] if create_a else "(none)"
        rule_b = create_b[0][0] if create_b else "(none)"
    else:
        for tid in tree.preorder():
            ea = table_a.get(tid)
            eb = table_b.get(tid)
            if ea == eb:
                continue
            node = tid
            span = max(len(ea or ()), len(eb or ()))
            for i in range(span):
                da = _describe(ea, i, intro_a, tid)
                db = _describe(eb, i, intro_b, tid)
                if da != db:
                    rule_a, rule_b = da, db
                    break
            break
    return Witness(
        tree=tree,
        rendered=render(tree),
        node=node,
        rule_a=rule_a,
        rule_b=rule_b,
        derivation_a=tuple(s.application for s in steps_a),
        derivation_b=tuple(s.application for s in steps_b),
    )


def check_unambiguous(
    rs: RuleSet,
    grammar: Grammar,
    *,
    max_nodes: int = 9,
    policy=None,
) -> AmbiguityReport:
    """Search for a tree within the bound that has two distinct histories.

    The bound keeps the check decidable; a clean report certifies nothing
    about larger trees, though in practice a clash shows up near the smallest
    tree the clashing rules can both build.
    """
    policy = policy or policy_leftmost
    trees_checked = 0
    derivations_checked = 0
    underivable = 0
    for tree in enumerate_complete_trees(grammar, max_nodes):
        trees_checked += 1
        seen: dict[tuple, tuple[dict, list[DerivationStep]]] = {}
        try:
            for steps in iter_derivations(tree, rs, policy):
                derivations_checked += 1
                table = _history_table(steps, rs)
                key = _freeze(table)
                if key not in seen:
                    seen[key] = (table, steps)
                if len(seen) == 2:
                    (ta, sa), (tb, sb) = seen.values()
                    witness = _build_witness(tree, ta, sa, tb, sb, rs)
                    return AmbiguityReport(
                        False,
                        max_nodes,
                        trees_checked,
                        derivations_checked,
                        underivable,
                        witness,
                    )
        except UnderivableTreeError:
            underivable += 1
    return AmbiguityReport(
        True, max_nodes, trees_checked, derivations_checked, underivable, None
    )
