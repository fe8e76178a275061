"""Annotated abstract syntax trees and rewriting-rule application.

Trees are persistent values: ``apply_rule`` returns a new tree and leaves its
input untouched, so search states can share structure freely.  Node ids are
assigned from a per-tree counter and are never reused, which keeps replays of
a recorded application sequence aligned id-for-id.

Application uses one splice semantics for every rule kind: the replacement
tree takes the place of the matched node, and the anchored replacement node
inherits the matched node's id, its subtree, and whatever mark is left after
consuming the expansion direction.  For a plain top-down rule (anchor at the
root) that collapses to "keep the node, add children"; for a bottom-up rule
it hangs the old root under a new one.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .errors import ApplyError, IncompleteTreeError, UnderivableTreeError
from .grammar import (
    Annotation,
    RewritingRule,
    RuleKind,
    RuleSet,
    RuleTree,
    Symbol,
)


@dataclass(frozen=True)
class AstNode:
    id: int
    symbol: Symbol
    annotation: Annotation = Annotation.NONE
    parent: int | None = None
    children: tuple[int, ...] = ()
    # key of the rule whose application introduced this node; None for
    # nodes seeded by nothing (never happens in practice) and kept across
    # later expansions of the node itself.
    origin: str | None = None


@dataclass(frozen=True)
class AnnotatedAst:
    nodes: dict[int, AstNode] = field(default_factory=dict)
    root: int | None = None
    next_id: int = 0

    @staticmethod
    def empty() -> "AnnotatedAst":
        return AnnotatedAst({}, None, 0)

    @property
    def is_empty(self) -> bool:
        return self.root is None

    def node(self, node_id: int) -> AstNode:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise ApplyError(f"unknown node id {node_id}") from None

    def preorder(self) -> list[int]:
        if self.root is None:
            return []
        out: list[int] = []
        stack = [self.root]
        while stack:
            nid = stack.pop()
            out.append(nid)
            stack.extend(reversed(self.nodes[nid].children))
        return out

    def __len__(self) -> int:
        return len(self.nodes)


@dataclass(frozen=True)
class Application:
    """One recorded rule application; ``node`` is None for creation steps."""

    node: int | None
    rule: int


def expandable_nodes(ast: AnnotatedAst) -> list[tuple[int, Annotation]]:
    """Annotated nodes in stable preorder, with their current marks."""
    return [
        (nid, ast.nodes[nid].annotation)
        for nid in ast.preorder()
        if ast.nodes[nid].annotation is not Annotation.NONE
    ]


def is_complete(ast: AnnotatedAst) -> bool:
    return not ast.is_empty and all(
        n.annotation is Annotation.NONE for n in ast.nodes.values()
    )


def direction_of(kind: RuleKind) -> Annotation:
    if kind is RuleKind.TOP_DOWN:
        return Annotation.D
    if kind is RuleKind.BOTTOM_UP:
        return Annotation.U
    raise ValueError("creation rules have no direction")


def apply_rule_with_ids(
    ast: AnnotatedAst, target: int | None, rule: RewritingRule
) -> tuple[AnnotatedAst, list[int]]:
    """Apply ``rule`` and also report the node ids of the replacement tree.

    The returned id list is aligned with the preorder positions of the rule's
    replacement, which is what type schemas are written against.
    """
    if rule.kind is RuleKind.CREATION:
        if target is not None:
            raise ApplyError("creation rules take no target node")
        if not ast.is_empty:
            raise ApplyError("creation rule applied to a non-empty tree")
        return _splice(ast, None, rule)
    if target is None:
        raise ApplyError(f"rule {rule.key} needs a target node")
    node = ast.node(target)
    sym = rule.pattern[0]  # type: ignore[index]
    if node.symbol != sym:
        raise ApplyError(
            f"rule {rule.key} expects symbol {sym}, node {target} is {node.symbol}"
        )
    direction = direction_of(rule.kind)
    if direction is Annotation.D and not node.annotation.needs_down:
        raise ApplyError(f"node {target} is not marked for downward expansion")
    if direction is Annotation.U and not node.annotation.needs_up:
        raise ApplyError(f"node {target} is not marked for upward expansion")
    if direction is Annotation.U and node.parent is not None:
        raise ApplyError(f"node {target} has a parent and cannot grow upward")
    if direction is Annotation.D and node.children:
        raise ApplyError(f"node {target} already has children")
    return _splice(ast, target, rule)


def apply_rule(ast: AnnotatedAst, target: int | None, rule: RewritingRule) -> AnnotatedAst:
    return apply_rule_with_ids(ast, target, rule)[0]


def _splice(
    ast: AnnotatedAst, target: int | None, rule: RewritingRule
) -> tuple[AnnotatedAst, list[int]]:
    nodes = dict(ast.nodes)
    next_id = ast.next_id
    old = ast.nodes[target] if target is not None else None
    leftover = (
        old.annotation.without(direction_of(rule.kind)) if old is not None else None
    )

    # ids come out in replacement preorder because build() appends each node
    # before recursing into its children
    ids: list[int] = []

    def build(rt: RuleTree, parent: int | None) -> int:
        nonlocal next_id
        if rt.anchor:
            nid = old.id  # type: ignore[union-attr]
            ids.append(nid)
            declared = tuple(build(c, nid) for c in rt.children)
            # a downward target is childless and a leaf anchor declares
            # nothing, so these never both contribute
            child_ids = declared + old.children  # type: ignore[union-attr]
            nodes[nid] = AstNode(
                nid, old.symbol, leftover, parent, child_ids, old.origin
            )
            return nid
        nid = next_id
        next_id += 1
        ids.append(nid)
        child_ids = tuple(build(c, nid) for c in rt.children)
        nodes[nid] = AstNode(nid, rt.symbol, rt.annotation, parent, child_ids, rule.key)
        return nid

    old_parent = old.parent if old is not None else None
    new_root_id = build(rule.replacement, old_parent)

    if old_parent is not None:
        parent_node = nodes[old_parent]
        new_children = tuple(
            new_root_id if cid == (old.id if old else None) else cid
            for cid in parent_node.children
        )
        nodes[old_parent] = replace(parent_node, children=new_children)
        root = ast.root
    else:
        root = new_root_id

    return AnnotatedAst(nodes, root, next_id), ids


def render(ast: AnnotatedAst) -> str:
    """Terminal leaves left to right, separated by single spaces."""
    if not is_complete(ast):
        raise IncompleteTreeError("cannot render a partial tree")
    texts = [
        ast.nodes[nid].symbol.name
        for nid in ast.preorder()
        if ast.nodes[nid].symbol.is_terminal
    ]
    return " ".join(texts)


def leaf_tokens(ast: AnnotatedAst) -> list[str]:
    return [
        ast.nodes[nid].symbol.name
        for nid in ast.preorder()
        if ast.nodes[nid].symbol.is_terminal
    ]


def to_sexpr(ast: AnnotatedAst) -> str:
    """Debug form, annotations as ^ suffixes: (E (E "hours") "> 12")."""
    if ast.is_empty:
        return "()"

    def walk(nid: int) -> str:
        node = ast.nodes[nid]
        label = str(node.symbol)
        if node.annotation is not Annotation.NONE:
            label += f"^{node.annotation}"
        if not node.children:
            return label
        inner = " ".join(walk(c) for c in node.children)
        return f"({label} {inner})"

    return walk(ast.root)  # type: ignore[arg-type]


def isomorphic(a: AnnotatedAst, b: AnnotatedAst) -> bool:
    """Structural equality ignoring node ids and origins."""

    def shape(ast: AnnotatedAst, nid: int):
        node = ast.nodes[nid]
        return (
            node.symbol,
            node.annotation,
            tuple(shape(ast, c) for c in node.children),
        )

    if a.is_empty or b.is_empty:
        return a.is_empty and b.is_empty
    return shape(a, a.root) == shape(b, b.root)


def build_complete_ast(shape) -> AnnotatedAst:
    """Build a finished tree from nested (Symbol, children) tuples."""
    nodes: dict[int, AstNode] = {}
    counter = 0

    def walk(item, parent: int | None) -> int:
        nonlocal counter
        sym, children = item
        nid = counter
        counter += 1
        child_ids = tuple(walk(c, nid) for c in children)
        nodes[nid] = AstNode(nid, sym, Annotation.NONE, parent, child_ids, None)
        return nid

    root = walk(shape, None)
    return AnnotatedAst(nodes, root, counter)


def policy_leftmost(ast: AnnotatedAst) -> tuple[int, Annotation]:
    """Pick the first marked node in preorder; both-ways marks go up first."""
    for nid, mark in expandable_nodes(ast):
        if mark.needs_up:
            return nid, Annotation.U
        return nid, Annotation.D
    raise ValueError("tree has no expandable node")


# --------------------------------------------------------------------------
# derivation reconstruction

@dataclass(frozen=True)
class DerivationStep:
    application: Application
    direction: Annotation | None  # None for creation
    target_node: int | None  # id in the target tree; None for creation
    introduced: tuple[int, ...]  # target ids matched by fresh replacement nodes


def _ancestor(ast: AnnotatedAst, nid: int, depth: int) -> int | None:
    current: int | None = nid
    for _ in range(depth):
        if current is None:
            return None
        current = ast.nodes[current].parent
    return current


def _match_replacement(
    rule: RewritingRule,
    target: AnnotatedAst,
    root_tid: int,
    anchor_tid: int | None,
) -> list[tuple[int, int]] | None:
    """Match the replacement tree downward at ``root_tid``.

    Returns (preorder position, target id) pairs for every replacement node,
    or None if the shapes disagree.  The anchor must land exactly on
    ``anchor_tid`` and its subtree is not descended into.
    """
    out: list[tuple[int, int]] = []
    pos = -1

    def walk(rt: RuleTree, tid: int) -> bool:
        nonlocal pos
        pos += 1
        node = target.nodes[tid]
        if node.symbol != rt.symbol:
            return False
        out.append((pos, tid))
        if rt.anchor:
            if tid != anchor_tid:
                return False
            if not rt.children:
                # leaf anchor: the kept subtree was matched by earlier steps
                return True
            # fall through: a downward anchor declares the new children
        elif rt.annotation.needs_down:
            # subtree left for later steps
            return True
        if len(rt.children) != len(node.children):
            return False
        for sub, child_tid in zip(rt.children, node.children):
            if not walk(sub, child_tid):
                return False
        return True

    if not walk(rule.replacement, root_tid):
        return None
    if not rule.replacement.annotation.needs_up and anchor_tid is None:
        # a creation without an upward mark can never gain ancestors, so it
        # must already sit at the target root
        if root_tid != target.root:
            return None
    return out


def iter_derivations(
    target: AnnotatedAst,
    rs: RuleSet,
    policy,
    max_derivations: int | None = None,
):
    """Yield every application sequence of ``rs`` that builds ``target``.

    Node choice follows ``policy``, so sequences differ only in which rules
    were picked, never in visit order.  Each yielded item is a list of
    ``DerivationStep``; replaying the contained applications from an empty
    tree reproduces ``target`` up to node ids.
    """
    if not is_complete(target):
        raise IncompleteTreeError("derivations need a finished target tree")

    produced = 0
    stuck: list[tuple[int, str]] = []

    def walk(ast: AnnotatedAst, mapping: dict[int, int], steps: list[DerivationStep]):
        nonlocal produced
        if max_derivations is not None and produced >= max_derivations:
            return
        if ast.is_empty:
            for rule in rs.creation_rules:
                for tid in target.preorder():
                    matched = _match_replacement(rule, target, tid, None)
                    if matched is None:
                        continue
                    new_ast, ids = apply_rule_with_ids(ast, None, rule)
                    new_mapping = {ids[pos]: t for pos, t in matched}
                    step = DerivationStep(
                        Application(None, rule.id),
                        None,
                        None,
                        tuple(t for _, t in matched),
                    )
                    yield from walk(new_ast, new_mapping, steps + [step])
            if not rs.creation_rules:
                stuck.append((0, "no creation rules"))
            return
        if is_complete(ast):
            if mapping[ast.root] == target.root:
                produced += 1
                yield steps
            return
        node_id, direction = policy(ast)
        node = ast.nodes[node_id]
        tid = mapping[node_id]
        candidates = rs.rules_for(node.symbol, direction)
        progressed = False
        for rule in candidates:
            depth = len(rule.anchor_path() or ())
            root_tid = _ancestor(target, tid, depth)
            if root_tid is None:
                continue
            if node.parent is None:
                # the splice result replaces the tree root here; once it can
                # no longer grow upward it must already map to the target root
                if rule.replacement.anchor:
                    still_up = node.annotation.without(direction).needs_up
                else:
                    still_up = rule.replacement.annotation.needs_up
                if not still_up and root_tid != target.root:
                    continue
            matched = _match_replacement(rule, target, root_tid, tid)
            if matched is None:
                continue
            new_ast, ids = apply_rule_with_ids(ast, node_id, rule)
            new_mapping = dict(mapping)
            fresh: list[int] = []
            ok = True
            for pos, t in matched:
                rid = ids[pos]
                if rid in new_mapping:
                    if new_mapping[rid] != t:
                        ok = False
                        break
                else:
                    new_mapping[rid] = t
                    fresh.append(t)
            if not ok:
                continue
            progressed = True
            step = DerivationStep(
                Application(node_id, rule.id), direction, tid, tuple(fresh)
            )
            yield from walk(new_ast, new_mapping, steps + [step])
        if not progressed:
            stuck.append((len(steps), f"node {tid} ({node.symbol})"))

    yield from walk(AnnotatedAst.empty(), {}, [])
    if produced == 0:
        detail = max(stuck)[1] if stuck else "empty rule set"
        raise UnderivableTreeError(f"tree is not derivable; stuck at {detail}")


def reconstruct_applications(
    complete: AnnotatedAst, rs: RuleSet, policy
) -> list[Application]:
    """The first (policy-ordered) application sequence deriving ``complete``.

    For an unambiguous rule set the sequence is unique up to reordering, so
    this is the canonical replay used for training extraction and scoring.
    """
    for steps in iter_derivations(complete, rs, policy, max_derivations=1):
        return [s.application for s in steps]
    raise UnderivableTreeError("tree is not derivable")  # pragma: no cover


def replay(rs: RuleSet, applications: list[Application]) -> AnnotatedAst:
    """Re-run a recorded application list from the empty tree."""
    ast = AnnotatedAst.empty()
    for app in applications:
        ast = apply_rule(ast, app.node, rs[app.rule])
    return ast
