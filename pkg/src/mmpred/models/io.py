"""Saving and loading fitted models: weights file plus a JSON metadata sidecar."""
from __future__ import annotations

import json
import pickle
from pathlib import Path

import numpy as np

from .. import numcore as nc
from .base import Classifier
from .neural import NeuralClassifier

FORMAT_TAG = "mmpred.model/1"


def save_model(model: Classifier, path, modality: str | None = None,
               schema_hash: str | None = None) -> Path:
    """Write ``<path>.json`` and either ``<path>.ckpt`` (deep models, numcore
    checkpoint) or ``<path>.pkl`` (scikit-learn backed and kernel models)."""
    path = Path(path)
    meta = dict(model.metadata, format=FORMAT_TAG, modality=modality, schema_hash=schema_hash)
    if isinstance(model, NeuralClassifier):
        nc.checkpoint.save(path.with_suffix(".ckpt"), model.net.state_dict())
        meta["weights"] = path.with_suffix(".ckpt").name
        meta["history"] = {k: v for k, v in model.history.items() if k != "loss"}
    else:
        with open(path.with_suffix(".pkl"), "wb") as fh:
            pickle.dump(model, fh)
        meta["weights"] = path.with_suffix(".pkl").name
    path.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True, default=float))
    return path.with_suffix(".json")


def load_model(path) -> tuple[Classifier, dict]:
    from . import make_model
    path = Path(path).with_suffix(".json")
    meta = json.loads(path.read_text())
    if meta.get("format") != FORMAT_TAG:
        raise ValueError(f"{path}: not a saved model")
    weights = path.parent / meta["weights"]
    if weights.suffix == ".pkl":
        with open(weights, "rb") as fh:
            return pickle.load(fh), meta
    model = make_model(meta["kind"], seed=meta["seed"], **meta["hyperparameters"])
    model.input_shape = tuple(meta["input_shape"] or ())
    # build() only reads the trailing shape (or the stored vocabulary size)
    if model.input_kind == "tokens":
        dummy = np.zeros((2, 1), dtype=np.int64)
    else:
        dummy = np.zeros((2,) + model.input_shape)
    model.net = model.build(dummy)
    model.net.load_state_dict(nc.checkpoint.load(weights))
    model.net.eval()
    return model, meta
