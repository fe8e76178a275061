"""Persisted model bundles.

A bundle is one JSON document holding everything a prediction run needs:
the mined templates, the fitted model parameters, the feature pipeline if
the model uses one, the training configuration, and a digest of the corpus
it was trained from.  Serialization is canonical (sorted keys, fixed
separators, trailing newline) so that retraining with the same seed writes
byte-identical files.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Mapping

from .condsynth import CondStepResolver, Template, TrainedCond
from .errors import BundleError
from .features import FeaturePipeline
from .models import FrequencyModel, LogisticModel, TableModel, UniformModel

BUNDLE_VERSION = 1
_KNOWN_KINDS = ("frequency", "logistic", "table", "uniform")


def canonical_json(data) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":")) + "\n"


def sha256_of_file(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


@dataclass
class Bundle:
    model_kind: str
    templates: tuple[Template, ...]
    model_params: dict
    pipeline_params: dict | None = None
    config: dict = field(default_factory=dict)
    corpus_sha256: str = ""
    version: int = BUNDLE_VERSION

    def build_model(self):
        """Reconstruct the prediction model this bundle describes."""
        if self.model_kind == "uniform":
            return UniformModel()
        if self.model_kind == "table":
            return TableModel.from_nested(self.model_params.get("table", {}))
        if self.model_kind == "frequency":
            return FrequencyModel.from_params(self.model_params)
        pipeline = FeaturePipeline.from_params(self.pipeline_params)
        resolver = CondStepResolver(self.templates)
        return LogisticModel.from_params(self.model_params, pipeline, resolver)

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "model_kind": self.model_kind,
            "templates": [t.to_dict() for t in self.templates],
            "model": self.model_params,
            "pipeline": self.pipeline_params,
            "config": self.config,
            "corpus_sha256": self.corpus_sha256,
        }

    @staticmethod
    def from_dict(data: Mapping) -> "Bundle":
        version = data.get("version")
        if version != BUNDLE_VERSION:
            raise BundleError(
                f"unsupported bundle version {version!r} (expected {BUNDLE_VERSION})"
            )
        kind = data.get("model_kind")
        if kind not in _KNOWN_KINDS:
            raise BundleError(f"unknown model kind {kind!r}")
        try:
            templates = tuple(Template.from_dict(t) for t in data["templates"])
            model_params = dict(data["model"])
        except (KeyError, TypeError) as err:
            raise BundleError(f"malformed bundle: {err}") from None
        if kind == "logistic" and not data.get("pipeline"):
            raise BundleError("logistic bundle is missing its feature pipeline")
        return Bundle(
            model_kind=kind,
            templates=templates,
            model_params=model_params,
            pipeline_params=data.get("pipeline"),
            config=dict(data.get("config") or {}),
            corpus_sha256=data.get("corpus_sha256", ""),
        )


def bundle_of(trained: TrainedCond, config: dict, corpus_sha256: str = "") -> Bundle:
    if trained.model_kind == "frequency":
        params = trained.frequency.to_params()
        pipeline = None
    elif trained.model_kind == "logistic":
        params = trained.logistic.to_params()
        pipeline = trained.pipeline.to_params()
    elif trained.model_kind == "uniform":
        params = {}
        pipeline = None
    else:
        raise BundleError(f"cannot bundle a {trained.model_kind!r} model")
    return Bundle(
        model_kind=trained.model_kind,
        templates=trained.templates,
        model_params=params,
        pipeline_params=pipeline,
        config=dict(config),
        corpus_sha256=corpus_sha256,
    )


def save_bundle(path: str, bundle: Bundle) -> None:
    text = canonical_json(bundle.to_dict())
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write(text)


def load_bundle(path: str) -> Bundle:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            data = json.load(handle)
    except json.JSONDecodeError as err:
        raise BundleError(f"{path}: not valid JSON ({err})") from None
    if not isinstance(data, dict):
        raise BundleError(f"{path}: bundle must be a JSON object")
    return Bundle.from_dict(data)
