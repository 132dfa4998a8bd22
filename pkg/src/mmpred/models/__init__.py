"""Unimodal classifier zoo behind one fit / predict_proba interface."""
from .base import Classifier, FitError, InferenceError
from .grid import DEFAULT_GRID, HyperGrid, expand
from .neural import (
    GRUClassifier,
    MLPClassifier,
    NeuralClassifier,
    TextEncoderClassifier,
    TrainConfig,
    TrainingError,
    train_loop,
)
from .tabular import TabularClassifier
from .timeseries import C22_NAMES, C22FeaturesClassifier, RocketClassifier, c22_series_features

TABULAR_KINDS = ("knn", "logreg", "gbt", "rforest")
MODEL_KINDS = TABULAR_KINDS + ("mlp", "rocket", "c22features", "gru_rnn", "text_encoder")
DEEP_KINDS = ("mlp", "gru_rnn", "text_encoder")
_CLASSES = {"mlp": MLPClassifier, "rocket": RocketClassifier, "c22features": C22FeaturesClassifier,
            "gru_rnn": GRUClassifier, "text_encoder": TextEncoderClassifier}


def make_model(kind: str, seed: int = 0, **hp) -> Classifier:
    """Instantiate an unfitted model of ``kind``."""
    if kind in TABULAR_KINDS:
        return TabularClassifier(kind, seed=seed, **hp)
    if kind not in _CLASSES:
        raise ValueError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")
    return _CLASSES[kind](seed=seed, **hp)


def predict_proba(model: Classifier, X):
    return model.predict_proba(X)


from .io import load_model, save_model  # noqa: E402

__all__ = [
    "C22_NAMES", "C22FeaturesClassifier", "Classifier", "DEEP_KINDS", "DEFAULT_GRID", "FitError",
    "GRUClassifier", "HyperGrid", "InferenceError", "MLPClassifier", "MODEL_KINDS",
    "NeuralClassifier", "RocketClassifier", "TabularClassifier", "TextEncoderClassifier",
    "TrainConfig", "TrainingError", "c22_series_features", "expand", "load_model", "make_model",
    "predict_proba", "save_model", "train_loop",
]
