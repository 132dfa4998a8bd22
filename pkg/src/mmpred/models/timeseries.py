"""Traditional multivariate time-series classifiers: random convolution kernels and summary features."""
from __future__ import annotations

import numpy as np
from sklearn.linear_model import RidgeClassifierCV

from .base import Classifier
from .tabular import make_estimator

KERNEL_LENGTHS = (7, 9, 11)


def generate_kernels(n_kernels: int, n_channels: int, length: int, rng: np.random.Generator) -> list[dict]:
    """Random kernels: length, centred normal weights, bias, dilation, padding and channel subset."""
    kernels = []
    for _ in range(n_kernels):
        klen = int(rng.choice(KERNEL_LENGTHS))
        max_ch = min(n_channels, klen)
        n_ch = int(2 ** rng.uniform(0, np.log2(max_ch + 1)))
        n_ch = max(1, min(n_ch, n_channels))
        channels = np.sort(rng.choice(n_channels, n_ch, replace=False))
        w = rng.normal(0.0, 1.0, (n_ch, klen))
        w -= w.mean(axis=1, keepdims=True)
        bias = rng.uniform(-1.0, 1.0)
        hi = np.log2((length - 1) / (klen - 1)) if length > 1 else 0.0
        dilation = int(2 ** rng.uniform(0, hi)) if hi > 0 else 1
        padding = ((klen - 1) * dilation) // 2 if rng.integers(2) else 0
        kernels.append({"weights": w, "bias": bias, "dilation": max(dilation, 1),
                        "padding": padding, "channels": channels})
    return kernels


def kernel_fits(kernel: dict, length: int) -> bool:
    span = (kernel["weights"].shape[1] - 1) * kernel["dilation"]
    return length + 2 * kernel["padding"] - span > 0


def apply_kernel(X: np.ndarray, kernel: dict) -> np.ndarray:
    """[n, C, T] -> [n, 2] (proportion of positive values, max)."""
    w, d, p = kernel["weights"], kernel["dilation"], kernel["padding"]
    klen = w.shape[1]
    xs = X[:, kernel["channels"], :]
    if p:
        xs = np.pad(xs, ((0, 0), (0, 0), (p, p)))
    out_len = xs.shape[2] - (klen - 1) * d
    idx = np.arange(out_len)[:, None] + d * np.arange(klen)[None, :]
    conv = np.einsum("ncoj,cj->no", xs[:, :, idx], w) + kernel["bias"]
    return np.stack([(conv > 0).mean(axis=1), conv.max(axis=1)], axis=1)


class RocketClassifier(Classifier):
    """Random convolutional kernels with PPV/max pooling and a ridge head.

    Kernels whose dilated span exceeds the padded series are dropped at fit
    time. Probabilities are the logistic transform of the ridge decision
    value, so the 0.5 threshold agrees with the ridge class prediction.
    """

    kind = "rocket"
    input_kind = "series"

    def __init__(self, seed: int = 0, num_kernels: int = 10000, **hp):
        super().__init__(seed, num_kernels=num_kernels, **hp)
        self.num_kernels = int(num_kernels)

    def transform(self, X: np.ndarray) -> np.ndarray:
        return np.concatenate([apply_kernel(X, k) for k in self.kernels], axis=1)

    def fit(self, X, y):
        X, y = self._check_fit_input(X, y)
        rng = np.random.default_rng(self.seed)
        kernels = generate_kernels(self.num_kernels, X.shape[1], X.shape[2], rng)
        self.kernels = [k for k in kernels if kernel_fits(k, X.shape[2])]
        self.n_skipped = len(kernels) - len(self.kernels)
        F = self.transform(X) if self.kernels else np.zeros((len(X), 1))
        self.scale_ = F.std(axis=0)
        self.scale_[self.scale_ == 0] = 1.0
        self.ridge = RidgeClassifierCV(alphas=np.logspace(-3, 3, 10)).fit(F / self.scale_, y)
        return self

    def predict_proba(self, X) -> np.ndarray:
        X = self._check_predict_input(X)
        F = self.transform(X) if self.kernels else np.zeros((len(X), 1))
        z = self.ridge.decision_function(F / self.scale_)
        return 0.5 * (1.0 + np.tanh(0.5 * z))


C22_NAMES = ("mean", "std", "longest_streak_above_mean", "acf_first_zero",
             "histogram_mode_width", "slope", "proportion_above_mean", "last_minus_first")


def _longest_run(mask: np.ndarray) -> int:
    best = cur = 0
    for v in mask:
        cur = cur + 1 if v else 0
        best = max(best, cur)
    return best


def c22_series_features(x) -> np.ndarray:
    """The eight summary features of one univariate series."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    mu, sd = x.mean(), x.std()
    dev = x - mu
    above = dev > 0
    if sd > 0:
        acf = np.array([np.dot(dev[: n - k], dev[k:]) for k in range(n)]) / np.dot(dev, dev)
        zeros = np.nonzero(acf[1:] <= 0)[0]
        acf_zero = float(zeros[0] + 1) if len(zeros) else float(n)
        z = dev / sd
        counts, edges = np.histogram(z, bins=5)
        mode_width = float(edges[np.argmax(counts) + 1] - edges[np.argmax(counts)])
    else:
        acf_zero, mode_width = float(n), 0.0
    t = np.arange(n) - (n - 1) / 2
    slope = float(np.dot(t, x) / np.dot(t, t)) if n > 1 else 0.0
    return np.array([mu, sd, float(_longest_run(above)), acf_zero, mode_width, slope,
                     float(above.mean()), float(x[-1] - x[0])])


def c22_transform(X: np.ndarray) -> np.ndarray:
    """[n, C, T] -> [n, C * 8], channel-major."""
    n, C, _ = X.shape
    return np.array([[f for c in range(C) for f in c22_series_features(X[i, c])] for i in range(n)]).reshape(n, C * 8)


C22_ESTIMATORS = {
    "rforest200": ("rforest", {"n_estimators": 200}),
    "gbt200": ("gbt", {"n_estimators": 200}),
    "logreg": ("logreg", {}),
}


class C22FeaturesClassifier(Classifier):
    kind = "c22features"
    input_kind = "series"

    def __init__(self, seed: int = 0, estimator: str = "rforest200", **hp):
        super().__init__(seed, estimator=estimator, **hp)
        if estimator not in C22_ESTIMATORS:
            raise ValueError(f"c22features estimator must be one of {sorted(C22_ESTIMATORS)}")
        kind, ehp = C22_ESTIMATORS[estimator]
        self.estimator = make_estimator(kind, ehp, seed)

    def fit(self, X, y):
        X, y = self._check_fit_input(X, y)
        self.estimator.fit(c22_transform(X), y)
        return self

    def predict_proba(self, X) -> np.ndarray:
        X = self._check_predict_input(X)
        return self.estimator.predict_proba(c22_transform(X))[:, 1]
