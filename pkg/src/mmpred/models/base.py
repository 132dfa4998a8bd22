from __future__ import annotations

import numpy as np


class FitError(ValueError):
    pass


class InferenceError(ValueError):
    pass


INPUT_NDIM = {"tabular": 2, "series": 3, "tokens": 2}


def check_labels(y) -> np.ndarray:
    y = np.asarray(y)
    if y.ndim != 1:
        raise FitError(f"labels must be 1-D, got shape {y.shape}")
    if not np.isin(y, (0, 1)).all():
        raise FitError("labels must be binary 0/1")
    if len(np.unique(y)) < 2:
        raise FitError("training labels contain a single class")
    return y.astype(np.int64)


class Classifier:
    """Common surface of every unimodal classifier.

    ``input_kind`` is one of ``tabular`` [n, d], ``series`` [n, channels, T]
    or ``tokens`` [n, L]; the trailing shape seen at fit time is enforced at
    prediction time.
    """

    kind: str = ""
    input_kind: str = "tabular"

    def __init__(self, seed: int = 0, **hp):
        self.seed = seed
        self.hp = dict(hp)
        self.input_shape: tuple[int, ...] | None = None

    @property
    def metadata(self) -> dict:
        return {"kind": self.kind, "hyperparameters": self.hp, "seed": self.seed,
                "input_kind": self.input_kind,
                "input_shape": list(self.input_shape) if self.input_shape else None}

    def _check_fit_input(self, X, y):
        X = np.asarray(X)
        y = check_labels(y)
        if X.ndim != INPUT_NDIM[self.input_kind]:
            raise FitError(f"{self.kind} expects {self.input_kind} input, got shape {X.shape}")
        if len(X) != len(y):
            raise FitError(f"{len(X)} rows but {len(y)} labels")
        if self.input_kind != "tokens" and not np.isfinite(X).all():
            raise FitError("non-finite feature values")
        self.input_shape = X.shape[1:] if self.input_kind != "tokens" else ()
        return X, y

    def _check_predict_input(self, X):
        X = np.asarray(X)
        if self.input_shape is None:
            raise InferenceError(f"{self.kind} model is not fitted")
        if X.ndim != INPUT_NDIM[self.input_kind] or (
            self.input_kind != "tokens" and X.shape[1:] != tuple(self.input_shape)
        ):
            raise InferenceError(
                f"{self.kind} was fitted on {self.input_kind} input with trailing shape "
                f"{tuple(self.input_shape)}, got {X.shape}"
            )
        return X

    def fit(self, X, y):
        raise NotImplementedError

    def predict_proba(self, X) -> np.ndarray:
        raise NotImplementedError
