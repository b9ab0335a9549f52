"""Tabular datasets and the synthetic loan corpus.

Instances are plain lists of raw values (numbers for numeric features,
strings for categorical levels), in feature-spec order.  The synthetic loan
generator is fully seeded so the shipped corpus is reproducible in-repo.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import SchemaError, UnknownFeature


@dataclass(frozen=True)
class NumericFeature:
    name: str
    min: float
    max: float

    @property
    def range(self) -> float:
        return self.max - self.min


@dataclass(frozen=True)
class CategoricalFeature:
    name: str
    levels: tuple[str, ...]


FeatureSpec = NumericFeature | CategoricalFeature


@dataclass(frozen=True)
class TabularDataset:
    features: tuple[FeatureSpec, ...]
    rows: tuple[tuple, ...]
    labels: tuple[int, ...]

    def __post_init__(self):
        if len(self.rows) != len(self.labels):
            raise SchemaError("rows and labels differ in length")
        for row in self.rows:
            if len(row) != len(self.features):
                raise SchemaError("row width does not match feature specs")

    def feature_index(self, name: str) -> int:
        for i, spec in enumerate(self.features):
            if spec.name == name:
                return i
        raise UnknownFeature(name)

    def feature(self, name: str) -> FeatureSpec:
        return self.features[self.feature_index(name)]

    def column(self, name: str) -> list:
        idx = self.feature_index(name)
        return [row[idx] for row in self.rows]

    def check_instance(self, instance) -> None:
        """Raise SchemaError unless the instance respects the feature specs."""
        if len(instance) != len(self.features):
            raise SchemaError("instance width does not match feature specs")
        for value, spec in zip(instance, self.features):
            if isinstance(spec, NumericFeature):
                if not isinstance(value, (int, float)) or isinstance(value, bool):
                    raise SchemaError(f"{spec.name}: expected a number, got {value!r}")
                if not (spec.min <= float(value) <= spec.max):
                    raise SchemaError(f"{spec.name}: {value!r} outside [{spec.min}, {spec.max}]")
            else:
                if value not in spec.levels:
                    raise SchemaError(f"{spec.name}: {value!r} not in levels {spec.levels}")

    def baseline(self) -> list:
        """Per-feature training mean (numeric) / mode (categorical)."""
        base = []
        for i, spec in enumerate(self.features):
            col = [row[i] for row in self.rows]
            if isinstance(spec, NumericFeature):
                base.append(float(np.mean(col)))
            else:
                counts = {lvl: 0 for lvl in spec.levels}
                for v in col:
                    counts[v] += 1
                base.append(max(spec.levels, key=lambda l: counts[l]))
        return base


# ---------------------------------------------------------------------------
# synthetic loan corpus

LOAN_FEATURES: tuple[FeatureSpec, ...] = (
    NumericFeature("loan_amount", 1000.0, 40000.0),
    NumericFeature("int_rate", 5.0, 25.0),
    CategoricalFeature("term_months", ("36", "60")),
    NumericFeature("annual_income", 20000.0, 150000.0),
    NumericFeature("credit_score", 300.0, 850.0),
    NumericFeature("employment_years", 0.0, 40.0),
    CategoricalFeature("verification_status", ("verified", "source_verified", "not_verified")),
    CategoricalFeature("purpose", ("debt_consolidation", "major_purchase", "home_improvement", "holiday")),
)

# Plain-language names used by the annotation templates and the UI.
FEATURE_LABELS = {
    "loan_amount": "loan amount",
    "int_rate": "interest rate",
    "term_months": "loan term",
    "annual_income": "annual income",
    "credit_score": "credit score",
    "employment_years": "years in employment",
    "verification_status": "income verification status",
    "purpose": "loan purpose",
}

_VERIFICATION_BONUS = {"verified": 0.6, "source_verified": 0.3, "not_verified": -0.5}
_PURPOSE_BONUS = {"debt_consolidation": -0.1, "major_purchase": 0.3,
                  "home_improvement": 0.2, "holiday": -0.5}


def make_loan_dataset(n_rows: int = 1000, seed: int = 7, noise: float = 0.6) -> TabularDataset:
    """Seeded synthetic loan-approval corpus (label 1 = approved)."""
    rng = np.random.default_rng(seed)
    rows = []
    labels = []
    for _ in range(n_rows):
        loan_amount = float(np.round(rng.uniform(1000, 40000), 2))
        int_rate = float(np.round(rng.uniform(5, 25), 2))
        term = "36" if rng.random() < 0.6 else "60"
        income = float(np.round(rng.uniform(20000, 150000), 2))
        credit = float(np.round(rng.uniform(300, 850), 1))
        employ = float(np.round(rng.uniform(0, 40), 1))
        verification = rng.choice(("verified", "source_verified", "not_verified"),
                                  p=(0.4, 0.3, 0.3))
        purpose = rng.choice(("debt_consolidation", "major_purchase",
                              "home_improvement", "holiday"), p=(0.4, 0.25, 0.2, 0.15))
        latent = (
            1.8 * (credit - 575.0) / 275.0
            + 1.0 * (income - 85000.0) / 65000.0
            - 0.9 * (loan_amount - 20500.0) / 19500.0
            - 0.7 * (int_rate - 15.0) / 10.0
            + 0.4 * (employ - 20.0) / 20.0
            + (0.25 if term == "36" else -0.25)
            + _VERIFICATION_BONUS[str(verification)]
            + _PURPOSE_BONUS[str(purpose)]
            + float(rng.normal(0.0, noise))
        )
        rows.append((loan_amount, int_rate, term, income, credit, employ,
                     str(verification), str(purpose)))
        labels.append(1 if latent > 0 else 0)
    return TabularDataset(features=LOAN_FEATURES, rows=tuple(rows), labels=tuple(labels))


# ---------------------------------------------------------------------------
# CSV round-trip (header row + `label` column)


def write_csv(data: TabularDataset, path: str | Path) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([spec.name for spec in data.features] + ["label"])
        for row, label in zip(data.rows, data.labels):
            writer.writerow(list(row) + [label])


def read_csv(path: str | Path, features: tuple[FeatureSpec, ...]) -> TabularDataset:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        expected = [spec.name for spec in features] + ["label"]
        if header != expected:
            raise SchemaError(f"CSV header {header} does not match feature specs {expected}")
        rows = []
        labels = []
        for raw in reader:
            values = []
            for value, spec in zip(raw, features):
                values.append(float(value) if isinstance(spec, NumericFeature) else value)
            rows.append(tuple(values))
            labels.append(int(raw[-1]))
    return TabularDataset(features=features, rows=tuple(rows), labels=tuple(labels))
