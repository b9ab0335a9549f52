"""Reference classifiers for the loan corpus.

The chatbot explains a desk-scale surrogate model trained in-repo.  Two kinds
ship: a logistic model and a shallow decision tree, both wrapping scikit-learn
estimators behind a raw-instance interface (numbers + category strings).
``predict`` is defined as ``score >= 0.5`` so the probability and the label
can never disagree.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.linear_model import LogisticRegression
from sklearn.tree import DecisionTreeClassifier

from .data import NumericFeature, TabularDataset
from .errors import DegenerateData, InvalidInstance

MODEL_KINDS = ("LogisticSurrogate", "TreeSurrogate")


@dataclass(frozen=True)
class _Encoder:
    """Raw rows -> numeric design matrix (standardized numerics, one-hot categoricals)."""
    features: tuple
    means: tuple[float, ...]
    stds: tuple[float, ...]

    def encode(self, rows) -> np.ndarray:
        out = []
        for row in rows:
            vec: list[float] = []
            num_idx = 0
            for value, spec in zip(row, self.features):
                if isinstance(spec, NumericFeature):
                    vec.append((float(value) - self.means[num_idx]) / self.stds[num_idx])
                    num_idx += 1
                else:
                    vec.extend(1.0 if value == lvl else 0.0 for lvl in spec.levels)
            out.append(vec)
        return np.asarray(out, dtype=float)

    @classmethod
    def fit(cls, data: TabularDataset) -> "_Encoder":
        means = []
        stds = []
        for i, spec in enumerate(data.features):
            if isinstance(spec, NumericFeature):
                col = np.asarray([row[i] for row in data.rows], dtype=float)
                means.append(float(col.mean()))
                std = float(col.std())
                stds.append(std if std > 0 else 1.0)
        return cls(features=data.features, means=tuple(means), stds=tuple(stds))


class Model:
    """Trained surrogate: probability in [0, 1] plus thresholded label."""

    def __init__(self, kind: str, encoder: _Encoder, estimator, data: TabularDataset):
        self.kind = kind
        self._encoder = encoder
        self._estimator = estimator
        self.features = data.features
        self._data = data

    def _check(self, instance) -> None:
        try:
            self._data.check_instance(instance)
        except Exception as exc:
            raise InvalidInstance(str(exc)) from exc

    def score(self, instance) -> float:
        self._check(instance)
        x = self._encoder.encode([instance])
        return float(np.clip(self._estimator.predict_proba(x)[0, 1], 0.0, 1.0))

    def score_batch(self, instances) -> np.ndarray:
        x = self._encoder.encode(instances)
        return np.clip(self._estimator.predict_proba(x)[:, 1], 0.0, 1.0)

    def predict(self, instance) -> int:
        return 1 if self.score(instance) >= 0.5 else 0

    def predict_batch(self, instances) -> np.ndarray:
        return (self.score_batch(instances) >= 0.5).astype(int)

    def parameters(self) -> dict:
        """Fitted parameters, for determinism checks."""
        est = self._estimator
        if isinstance(est, LogisticRegression):
            return {"coef": est.coef_.copy(), "intercept": est.intercept_.copy()}
        tree = est.tree_
        return {"feature": tree.feature.copy(), "threshold": tree.threshold.copy(),
                "value": tree.value.copy()}


def train_reference_model(data: TabularDataset, kind: str = "LogisticSurrogate",
                          seed: int = 0) -> Model:
    """Fit a surrogate on the dataset; deterministic for a fixed seed."""
    if kind not in MODEL_KINDS:
        raise ValueError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")
    if len(set(data.labels)) < 2:
        raise DegenerateData("both labels must be present in the training data")
    encoder = _Encoder.fit(data)
    x = encoder.encode(data.rows)
    y = np.asarray(data.labels, dtype=int)
    if kind == "LogisticSurrogate":
        estimator = LogisticRegression(max_iter=2000, random_state=seed)
    else:
        estimator = DecisionTreeClassifier(max_depth=5, random_state=seed)
    estimator.fit(x, y)
    return Model(kind=kind, encoder=encoder, estimator=estimator, data=data)


def training_accuracy(model: Model, data: TabularDataset) -> float:
    preds = model.predict_batch(data.rows)
    return float(np.mean(preds == np.asarray(data.labels)))
