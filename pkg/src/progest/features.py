"""Program context descriptions and their numeric feature encodings.

A ``Context`` is everything known about the hole a condition goes into: the
declared variables with their usage statistics, the surrounding class and
method names, and small token windows around the hole.  Names are encoded as
character-bigram count vectors and compressed with a PCA fitted at training
time; token windows use a small vocabulary learned alongside.

Feature vectors are assembled per decision kind from fixed blocks, so their
layout depends only on the PCA width.  Optional inputs encode as zeros plus a
trailing presence flag of 0, never as a shifted layout.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ContextError
from .minilang import TYPE_CLASSES, classify_type

# --------------------------------------------------------------------------
# context data

@dataclass(frozen=True)
class VariableInfo:
    """One declared variable near the hole, with cheap static statistics."""

    name: str
    type: str
    is_final: bool = False
    is_static: bool = False
    in_loop: bool = False
    has_initializer: bool = False
    init_is_zero: bool = False
    decl_distance: int = 0  # lines between the declaration and the hole
    def_sites: tuple[int, ...] = ()  # line offsets of assignments, up to three kept
    usage_count: int = 0
    usages_before: int = 0
    usages_after: int = 0

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "type": self.type,
            "final": self.is_final,
            "static": self.is_static,
            "in_loop": self.in_loop,
            "has_init": self.has_initializer,
            "init_zero": self.init_is_zero,
            "decl_distance": self.decl_distance,
            "def_sites": list(self.def_sites),
            "usages": self.usage_count,
            "usages_before": self.usages_before,
            "usages_after": self.usages_after,
        }

    @staticmethod
    def from_dict(data: Mapping) -> "VariableInfo":
        try:
            name = data["name"]
            type_name = data["type"]
        except KeyError as missing:
            raise ContextError(f"variable entry missing {missing}") from None
        return VariableInfo(
            name=name,
            type=type_name,
            is_final=bool(data.get("final", False)),
            is_static=bool(data.get("static", False)),
            in_loop=bool(data.get("in_loop", False)),
            has_initializer=bool(data.get("has_init", False)),
            init_is_zero=bool(data.get("init_zero", False)),
            decl_distance=int(data.get("decl_distance", 0)),
            def_sites=tuple(int(x) for x in data.get("def_sites", ())),
            usage_count=int(data.get("usages", 0)),
            usages_before=int(data.get("usages_before", 0)),
            usages_after=int(data.get("usages_after", 0)),
        )


@dataclass(frozen=True)
class Context:
    """The program surrounding one condition hole."""

    variables: tuple[VariableInfo, ...] = ()
    result_type: str = "Boolean"
    class_name: str = ""
    superclass_name: str = ""
    method_name: str = ""
    method_params: int = 0
    method_is_static: bool = False
    in_loop: bool = False
    before_tokens: tuple[str, ...] = ()
    after_tokens: tuple[str, ...] = ()

    @property
    def variable_types(self) -> dict[str, str]:
        return {v.name: v.type for v in self.variables}

    def variable(self, name: str) -> VariableInfo:
        for v in self.variables:
            if v.name == name:
                return v
        raise ContextError(f"no variable {name!r} in context")

    @staticmethod
    def simple(types: Mapping[str, str], result_type: str = "Boolean") -> "Context":
        """Bare context from a name -> type mapping, for demos and tests."""
        return Context(
            variables=tuple(VariableInfo(n, t) for n, t in types.items()),
            result_type=result_type,
        )

    def to_dict(self) -> dict:
        return {
            "class": self.class_name,
            "superclass": self.superclass_name,
            "method": self.method_name,
            "params": self.method_params,
            "static": self.method_is_static,
            "in_loop": self.in_loop,
            "before": list(self.before_tokens),
            "after": list(self.after_tokens),
            "result": self.result_type,
            "variables": [v.to_dict() for v in self.variables],
        }

    @staticmethod
    def from_dict(data: Mapping) -> "Context":
        variables = tuple(
            VariableInfo.from_dict(v) for v in data.get("variables", ())
        )
        names = [v.name for v in variables]
        if len(set(names)) != len(names):
            raise ContextError("duplicate variable names in context")
        return Context(
            variables=variables,
            result_type=data.get("result", "Boolean"),
            class_name=data.get("class", ""),
            superclass_name=data.get("superclass", ""),
            method_name=data.get("method", ""),
            method_params=int(data.get("params", 0)),
            method_is_static=bool(data.get("static", False)),
            in_loop=bool(data.get("in_loop", False)),
            before_tokens=tuple(data.get("before", ())),
            after_tokens=tuple(data.get("after", ())),
        )


# --------------------------------------------------------------------------
# name encodings

NAME_ALPHABET = "abcdefghijklmnopqrstuvwxyz0123456789_$"
_CHAR_INDEX = {ch: i for i, ch in enumerate(NAME_ALPHABET)}
BIGRAM_DIM = len(NAME_ALPHABET) ** 2


def encode_name_2gram(name: str) -> np.ndarray:
    """Character-bigram counts over a 38-letter alphabet (dim 1444).

    Names are lowercased; characters outside the alphabet collapse to ``_``.
    Names shorter than two characters encode as the zero vector.
    """
    vec = np.zeros(BIGRAM_DIM)
    lowered = name.lower()
    n = len(NAME_ALPHABET)
    for a, b in zip(lowered, lowered[1:]):
        ia = _CHAR_INDEX.get(a, _CHAR_INDEX["_"])
        ib = _CHAR_INDEX.get(b, _CHAR_INDEX["_"])
        vec[ia * n + ib] += 1.0
    return vec


_WORD_SPLIT = re.compile(r"[_$]+|(?<=[a-z0-9])(?=[A-Z])")


def name_words(name: str) -> list[str]:
    return [w.lower() for w in _WORD_SPLIT.split(name) if w]


def last_word(name: str) -> str:
    words = name_words(name)
    return words[-1] if words else ""


# --------------------------------------------------------------------------
# PCA over bigram vectors

@dataclass(frozen=True)
class PcaTransform:
    """Projection onto the top principal directions of the training names.

    ``components`` may hold fewer rows than ``dims`` when the data ran out of
    variance; applying the transform pads with zeros so the output length is
    always ``dims``.
    """

    mean: np.ndarray
    components: np.ndarray  # shape (kept, input dim)
    dims: int

    def to_params(self) -> dict:
        return {
            "mean": self.mean.tolist(),
            "components": self.components.tolist(),
            "dims": self.dims,
        }

    @staticmethod
    def from_params(data: Mapping) -> "PcaTransform":
        dims = int(data["dims"])
        mean = np.asarray(data["mean"], dtype=float)
        components = np.asarray(data["components"], dtype=float)
        if components.size == 0:
            components = components.reshape(0, mean.shape[0])
        return PcaTransform(mean, components, dims)


def pca_fit(
    vectors: Sequence[np.ndarray],
    dims: int,
    *,
    seed: int = 12345,
    tol: float = 1e-13,
    max_iter: int = 5000,
) -> PcaTransform:
    """Power iteration with deflation; deterministic under the seed.

    Needs at least two sample vectors; directions stop early once the
    residual variance is numerically zero.
    """
    data = np.asarray(list(vectors), dtype=float)
    if data.ndim != 2 or data.shape[0] < 2:
        width = data.shape[1] if data.ndim == 2 else BIGRAM_DIM
        return PcaTransform(np.zeros(width), np.zeros((0, width)), dims)
    mean = data.mean(axis=0)
    centered = data - mean
    rng = np.random.default_rng(seed)
    kept: list[np.ndarray] = []
    limit = min(dims, min(data.shape))
    for _ in range(limit):
        v = rng.standard_normal(data.shape[1])
        v /= np.linalg.norm(v)
        direction = None
        for _ in range(max_iter):
            w = centered.T @ (centered @ v) / data.shape[0]
            scale = np.linalg.norm(w)
            if scale < 1e-12:
                break
            w /= scale
            if min(np.linalg.norm(w - v), np.linalg.norm(w + v)) < tol:
                direction = w
                break
            v = w
        else:
            direction = v
        if direction is None:
            break
        kept.append(direction)
        projected = centered @ direction
        centered = centered - np.outer(projected, direction)
    components = np.array(kept) if kept else np.zeros((0, data.shape[1]))
    return PcaTransform(mean, components, dims)


def pca_apply(transform: PcaTransform, vec: np.ndarray) -> np.ndarray:
    """Project one vector; the zero vector stays zero (absent-name neutral)."""
    out = np.zeros(transform.dims)
    if vec.size == 0 or not vec.any() or transform.components.shape[0] == 0:
        return out
    projected = transform.components @ (vec - transform.mean)
    out[: projected.shape[0]] = projected
    return out


# --------------------------------------------------------------------------
# fitted pipeline: shared PCA plus a token-window vocabulary

WINDOW_VOCAB_SIZE = 32


@dataclass(frozen=True)
class FeaturePipeline:
    pca: PcaTransform
    vocab: tuple[str, ...]

    @property
    def dims(self) -> int:
        return self.pca.dims

    def embed_name(self, name: str) -> np.ndarray:
        return pca_apply(self.pca, encode_name_2gram(name))

    def window_vec(self, tokens: Sequence[str]) -> np.ndarray:
        """Binary bag over the vocabulary plus UNK, plus a presence flag."""
        vec = np.zeros(WINDOW_VOCAB_SIZE + 2)
        index = {t: i for i, t in enumerate(self.vocab)}
        for token in tokens:
            slot = index.get(token, WINDOW_VOCAB_SIZE)
            vec[slot] = 1.0
        if tokens:
            vec[-1] = 1.0
        return vec

    def to_params(self) -> dict:
        return {"pca": self.pca.to_params(), "vocab": list(self.vocab)}

    @staticmethod
    def from_params(data: Mapping) -> "FeaturePipeline":
        return FeaturePipeline(
            PcaTransform.from_params(data["pca"]), tuple(data["vocab"])
        )

    @staticmethod
    def fit(
        contexts: Iterable[Context], dims: int = 16, seed: int = 12345
    ) -> "FeaturePipeline":
        """Fit the shared name PCA and the window vocabulary on training data.

        Every name-ish string contributes once; pooling keeps a single
        projection for class, method, variable, and type names alike.
        """
        names: set[str] = set()
        counts: dict[str, int] = {}
        for ctx in contexts:
            for raw in (
                ctx.class_name,
                last_word(ctx.class_name),
                ctx.superclass_name,
                last_word(ctx.superclass_name),
                ctx.method_name,
                last_word(ctx.method_name),
            ):
                if raw:
                    names.add(raw)
            for v in ctx.variables:
                for raw in (v.name, last_word(v.name), v.type, last_word(v.type)):
                    if raw:
                        names.add(raw)
            for token in list(ctx.before_tokens) + list(ctx.after_tokens):
                counts[token] = counts.get(token, 0) + 1
        vectors = [encode_name_2gram(n) for n in sorted(names)]
        pca = pca_fit(vectors, dims, seed=seed)
        ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
        vocab = tuple(t for t, _ in ranked[:WINDOW_VOCAB_SIZE])
        return FeaturePipeline(pca, vocab)


# --------------------------------------------------------------------------
# feature blocks

_CLASS_INDEX = {name: i for i, name in enumerate(TYPE_CLASSES)}
_BOOL_PREFIXES = ("is", "has", "can", "should")


def _type_class_scalar(type_name: str) -> float:
    return _CLASS_INDEX[classify_type(type_name)] / (len(TYPE_CLASSES) - 1)


def context_block(ctx: Context | None, pipe: FeaturePipeline) -> np.ndarray:
    p = pipe.dims
    if ctx is None:
        return np.zeros(context_block_length(p))
    class_scalars = np.array(
        [
            len(ctx.class_name) / 20.0,
            1.0 if ctx.superclass_name else 0.0,
            1.0 if ("Abstract" in ctx.class_name or "Base" in ctx.class_name) else 0.0,
        ]
    )
    method_words = name_words(ctx.method_name)
    method_scalars = np.array(
        [
            len(ctx.method_name) / 20.0,
            1.0 if method_words[:1] and method_words[0] in _BOOL_PREFIXES else 0.0,
            ctx.method_params / 5.0,
            1.0 if ctx.method_is_static else 0.0,
        ]
    )
    return np.concatenate(
        [
            pipe.embed_name(ctx.class_name),
            pipe.embed_name(last_word(ctx.class_name)),
            pipe.embed_name(ctx.superclass_name),
            pipe.embed_name(last_word(ctx.superclass_name)),
            class_scalars,
            pipe.embed_name(ctx.method_name),
            method_scalars,
            pipe.window_vec(ctx.before_tokens),
            pipe.window_vec(ctx.after_tokens),
            np.array([1.0 if ctx.in_loop else 0.0, 1.0]),
        ]
    )


def context_block_length(p: int) -> int:
    return 5 * p + 3 + 4 + 2 * (WINDOW_VOCAB_SIZE + 2) + 2


def variable_block(var: VariableInfo | None, pipe: FeaturePipeline) -> np.ndarray:
    p = pipe.dims
    if var is None:
        return np.zeros(variable_block_length(p))
    word = last_word(var.name)
    sites = list(var.def_sites[:3]) + [0] * (3 - len(var.def_sites[:3]))
    scalars = np.array(
        [
            len(var.name) / 10.0,
            _type_class_scalar(var.type),
            1.0
            if (word and word in var.type.lower())
            or (last_word(var.type) and last_word(var.type) in var.name.lower())
            else 0.0,
            1.0 if var.is_final else 0.0,
            1.0 if var.is_static else 0.0,
            1.0 if var.in_loop else 0.0,
            1.0 if var.has_initializer else 0.0,
            1.0 if var.init_is_zero else 0.0,
            var.decl_distance / 50.0,
            sites[0] / 50.0,
            sites[1] / 50.0,
            sites[2] / 50.0,
            var.usage_count / 10.0,
            var.usages_before / 10.0,
            var.usages_after / 10.0,
            1.0,
        ]
    )
    return np.concatenate(
        [
            pipe.embed_name(var.name),
            pipe.embed_name(word),
            pipe.embed_name(var.type),
            scalars,
        ]
    )


def variable_block_length(p: int) -> int:
    return 3 * p + 16


@dataclass(frozen=True)
class TemplatePayload:
    """What a condition template exposes to the feature encoder."""

    key: str
    arity: int
    tokens: tuple[str, ...]  # skeleton with V1.. placeholders
    placeholder_types: tuple[str, ...]


_CMP_OPS = ("<", ">", "<=", ">=", "==", "!=")
_ARITH_OPS = ("+", "-", "*", "/", "%")


def expression_block(tpl: TemplatePayload | None, pipe: FeaturePipeline) -> np.ndarray:
    p = pipe.dims
    if tpl is None:
        return np.zeros(expression_block_length(p))
    tokens = tpl.tokens
    method = ""
    for i, token in enumerate(tokens):
        if token == "." and i + 1 < len(tokens):
            method = tokens[i + 1]
            break
    type_scalars = [0.0, 0.0, 0.0]
    for i, type_name in enumerate(tpl.placeholder_types[:3]):
        type_scalars[i] = _type_class_scalar(type_name)
    cmp_flags = [1.0 if op in tokens else 0.0 for op in _CMP_OPS]
    arith_flags = [1.0 if op in tokens else 0.0 for op in _ARITH_OPS]
    num_count = sum(1 for t in tokens if t[:1].isdigit())
    scalars = np.array(
        [tpl.arity / 4.0]
        + type_scalars
        + [1.0 if method else 0.0]
    )
    tail = np.array(
        cmp_flags
        + arith_flags
        + [
            num_count / 3.0,
            1.0 if "null" in tokens else 0.0,
            1.0 if "[" in tokens else 0.0,
            1.0,
        ]
    )
    return np.concatenate([scalars, pipe.embed_name(method), tail])


def expression_block_length(p: int) -> int:
    return p + 20


def position_block(position: int | None) -> np.ndarray:
    return np.array([0.0 if position is None else position / 5.0])


# --------------------------------------------------------------------------
# per-decision payloads and their vectors

@dataclass(frozen=True)
class StepPayload:
    """Everything one scoring decision gets to look at.

    ``kind`` routes to the right block layout: creating the first variable,
    choosing the expression template around it, or filling a later variable
    slot.  Optional parts are None and encode as zeroed blocks.
    """

    kind: str  # "creation" | "expression" | "variable"
    context: Context | None
    variable: VariableInfo | None = None  # the candidate being scored
    chosen: VariableInfo | None = None  # first variable, for expression steps
    previous: VariableInfo | None = None  # slot p-1 binding, for variable steps
    template: TemplatePayload | None = None
    position: int | None = None


def extract_features(payload: StepPayload, pipe: FeaturePipeline) -> np.ndarray:
    ctx_vec = context_block(payload.context, pipe)
    if payload.kind == "creation":
        return np.concatenate(
            [
                ctx_vec,
                variable_block(payload.variable, pipe),
                expression_block(payload.template, pipe),
            ]
        )
    if payload.kind == "expression":
        return np.concatenate(
            [
                ctx_vec,
                variable_block(payload.chosen, pipe),
                expression_block(payload.template, pipe),
            ]
        )
    if payload.kind == "variable":
        return np.concatenate(
            [
                ctx_vec,
                variable_block(payload.variable, pipe),
                variable_block(payload.previous, pipe),
                expression_block(payload.template, pipe),
                position_block(payload.position),
            ]
        )
    raise ContextError(f"unknown payload kind {payload.kind!r}")


def feature_length(kind: str, p: int) -> int:
    ctx = context_block_length(p)
    var = variable_block_length(p)
    expr = expression_block_length(p)
    if kind in ("creation", "expression"):
        return ctx + var + expr
    if kind == "variable":
        return ctx + 2 * var + expr + 1
    raise ContextError(f"unknown payload kind {kind!r}")


def expression_prefix_length(p: int) -> int:
    """Length of the candidate-independent slice of an expression vector."""
    return context_block_length(p) + variable_block_length(p)
