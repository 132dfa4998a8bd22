"""Traditional tabular classifiers (scikit-learn backed)."""
from __future__ import annotations

import numpy as np
from sklearn.ensemble import GradientBoostingClassifier, RandomForestClassifier
from sklearn.linear_model import LogisticRegression
from sklearn.neighbors import KNeighborsClassifier

from .base import Classifier, FitError


def make_estimator(kind: str, hp: dict, seed: int):
    if kind == "knn":
        return KNeighborsClassifier(n_neighbors=int(hp.get("n_neighbors", 5)),
                                    weights="distance", metric="euclidean")
    if kind == "logreg":
        return LogisticRegression(C=float(hp.get("C", 1.0)), penalty=hp.get("penalty", "l2"),
                                  solver="liblinear", random_state=seed, max_iter=1000)
    if kind == "gbt":
        return GradientBoostingClassifier(n_estimators=int(hp.get("n_estimators", 100)),
                                          max_depth=int(hp.get("max_depth", 3)),
                                          random_state=seed)
    if kind == "rforest":
        return RandomForestClassifier(n_estimators=int(hp.get("n_estimators", 100)),
                                      max_depth=hp.get("max_depth"), random_state=seed)
    raise ValueError(f"unknown tabular kind {kind!r}")


class TabularClassifier(Classifier):
    input_kind = "tabular"

    def __init__(self, kind: str, seed: int = 0, **hp):
        super().__init__(seed, **hp)
        self.kind = kind
        self.estimator = make_estimator(kind, hp, seed)

    def fit(self, X, y):
        X, y = self._check_fit_input(X, y)
        if self.kind == "knn" and self.estimator.n_neighbors > len(X):
            raise FitError(f"knn: k={self.estimator.n_neighbors} exceeds {len(X)} training rows")
        self.estimator.fit(X, y)
        return self

    def predict_proba(self, X) -> np.ndarray:
        X = self._check_predict_input(X)
        return self.estimator.predict_proba(X)[:, 1]
