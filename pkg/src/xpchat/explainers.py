"""Explanation techniques over desk-scale tabular models.

One technique ships per explanation type used by the loan typology:
Shapley-value feature attribution (exact coalition enumeration or permutation
sampling), grid-search counterfactuals, Gower-distance nearest neighbours,
greedy anchor rules, dataset statistics, and template-based textual
annotations.  Every artifact carries provenance (technique, parameters, seed)
and all techniques are deterministic under a fixed seed.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data import FEATURE_LABELS, NumericFeature, TabularDataset
from .errors import (InvalidInstance, KTooLarge, NoAnchorFound, NoCounterfactualFound,
                     SchemaError, UnknownFeature, UnknownFollowupEdge, UnsupportedPayload)
from .iff import FollowupKind, IffGraph, followups_of


# ---------------------------------------------------------------------------
# artifacts


@dataclass(frozen=True)
class Provenance:
    technique: str
    parameters: dict
    seed: int


@dataclass(frozen=True)
class FeatureAttribution:
    weights: tuple[tuple[str, float], ...]   # (feature, weight) in spec order
    base_score: float
    instance_score: float


@dataclass(frozen=True)
class Counterfactual:
    changes: tuple[tuple[str, object, object], ...]  # (feature, old, new)
    new_label: int


@dataclass(frozen=True)
class Neighbours:
    neighbours: tuple[tuple[tuple, int, float], ...]  # (row, label, distance)


@dataclass(frozen=True)
class AnchorRule:
    predicates: tuple[tuple[str, str, object], ...]  # (feature, op, value)
    precision: float
    n_samples: int


@dataclass(frozen=True)
class DatasetStats:
    feature: str
    bins: tuple[tuple[str, int], ...]
    count: int
    mean: float | None
    mode: str | None


@dataclass(frozen=True)
class TextAnnotation:
    text: str
    annotates: str | None   # technique of the annotated artifact


Payload = FeatureAttribution | Counterfactual | Neighbours | AnchorRule | DatasetStats | TextAnnotation

_PAYLOAD_TYPE_ID = {
    FeatureAttribution: "feature_attribution",
    Counterfactual: "counterfactual",
    Neighbours: "nearest_neighbour",
    AnchorRule: "anchor_rule",
    DatasetStats: "dataset_statistics",
    TextAnnotation: "text_annotation",
}


@dataclass(frozen=True)
class ExplanationArtifact:
    type_id: str
    payload: Payload
    provenance: Provenance
    agreement: float | None = None

    def __post_init__(self):
        expected = _PAYLOAD_TYPE_ID[type(self.payload)]
        if self.type_id != expected:
            raise SchemaError(f"payload {type(self.payload).__name__} does not match type {self.type_id!r}")


# ---------------------------------------------------------------------------
# feature attribution (Shapley values of the model score)


def _composite(instance, baseline, mask: int, n: int) -> tuple:
    return tuple(instance[j] if mask >> j & 1 else baseline[j] for j in range(n))


def shapley_exact(model, instance, baseline) -> list[float]:
    """Exact Shapley values of score(instance) against the baseline.

    Enumerates all coalitions; feasible up to ~12 features.
    """
    n = len(instance)
    if n > 16:
        raise InvalidInstance(f"exact enumeration infeasible for {n} features")
    values = [model.score(_composite(instance, baseline, mask, n)) for mask in range(1 << n)]
    fact = [math.factorial(i) for i in range(n + 1)]
    phis = [0.0] * n
    for mask in range(1 << n):
        s = bin(mask).count("1")
        w = fact[s] * fact[n - s - 1] / fact[n]
        for j in range(n):
            if not mask >> j & 1:
                phis[j] += w * (values[mask | (1 << j)] - values[mask])
    return phis


def shapley_sampled(model, instance, baseline, n_permutations: int, seed: int) -> list[float]:
    """Permutation-sampled Shapley values; exactly efficient by construction."""
    n = len(instance)
    rng = np.random.default_rng(seed)
    totals = np.zeros(n)
    for _ in range(n_permutations):
        perm = rng.permutation(n)
        current = list(baseline)
        prev = model.score(tuple(current))
        for j in perm:
            current[j] = instance[j]
            cur = model.score(tuple(current))
            totals[j] += cur - prev
            prev = cur
    return list(totals / n_permutations)


def feature_attribution(model, instance, baseline, n_samples: int | None = None,
                        seed: int = 0) -> ExplanationArtifact:
    """Shapley attribution of the model score relative to the baseline.

    Exact enumeration when the sample budget covers every coalition
    (n_samples is None or >= 2^features); permutation sampling otherwise.
    Either way the weights sum to score(instance) - score(baseline).
    """
    names = [spec.name for spec in model.features]
    n = len(names)
    if len(instance) != n or len(baseline) != n:
        raise InvalidInstance("instance/baseline width does not match the model's features")
    base_score = model.score(tuple(baseline))
    instance_score = model.score(tuple(instance))
    if n_samples is None or n_samples >= (1 << n):
        phis = shapley_exact(model, instance, baseline)
        technique = "exact_shapley"
        params = {"coalitions": 1 << n}
    else:
        if n_samples < 1:
            raise InvalidInstance("n_samples must cover all coalitions or enable sampling (>= 1)")
        phis = shapley_sampled(model, instance, baseline, n_samples, seed)
        technique = "sampling_shapley"
        params = {"permutations": n_samples}
    return ExplanationArtifact(
        type_id="feature_attribution",
        payload=FeatureAttribution(weights=tuple(zip(names, phis)),
                                   base_score=base_score, instance_score=instance_score),
        provenance=Provenance(technique=technique, parameters=params, seed=seed),
    )


# ---------------------------------------------------------------------------
# counterfactual search


def _candidate_values(spec, value, grid_levels: int) -> list:
    if isinstance(spec, NumericFeature):
        levels = np.linspace(spec.min, spec.max, grid_levels)
        return [float(v) for v in levels if not np.isclose(float(v), float(value))]
    return [lvl for lvl in spec.levels if lvl != value]


def _change_cost(spec, old, new) -> float:
    if isinstance(spec, NumericFeature):
        return abs(float(new) - float(old)) / spec.range if spec.range else 0.0
    return 1.0


def counterfactual(model, instance, max_changes: int = 2, grid_levels: int = 4,
                   desired_label: int | None = None, seed: int = 0) -> ExplanationArtifact:
    """Minimal change set that flips the prediction.

    Numeric features are discretized onto an equal-spaced grid.  Feasible
    change sets are ordered by (number of changes, normalized L1 magnitude,
    feature-index order); the search is exhaustive up to two changes and
    greedy beyond that.
    """
    specs = model.features
    current = model.predict(tuple(instance))
    target = desired_label if desired_label is not None else 1 - current

    def provenance():
        return Provenance(technique="grid_counterfactual",
                          parameters={"max_changes": max_changes, "grid_levels": grid_levels},
                          seed=seed)

    if current == target:
        return ExplanationArtifact(type_id="counterfactual",
                                   payload=Counterfactual(changes=(), new_label=current),
                                   provenance=provenance())

    candidates = [_candidate_values(spec, value, grid_levels)
                  for spec, value in zip(specs, instance)]

    def evaluate(subset: tuple[int, ...], values: tuple) -> tuple | None:
        trial = list(instance)
        for j, v in zip(subset, values):
            trial[j] = v
        if model.predict(tuple(trial)) != target:
            return None
        cost = sum(_change_cost(specs[j], instance[j], v) for j, v in zip(subset, values))
        return (len(subset), cost, subset, values)

    best: tuple | None = None
    exhaustive_depth = min(max_changes, 2)
    for size in range(1, exhaustive_depth + 1):
        for subset in itertools.combinations(range(len(specs)), size):
            for values in itertools.product(*(candidates[j] for j in subset)):
                found = evaluate(subset, values)
                if found is not None and (best is None or found < best):
                    best = found
        if best is not None:
            break  # fewer changes always wins; no need to search larger sets

    if best is None and max_changes > 2:
        # greedy per-feature extension towards the target score
        trial = list(instance)
        changed: dict[int, object] = {}
        for _ in range(max_changes):
            step_best = None
            for j in range(len(specs)):
                if j in changed:
                    continue
                for v in candidates[j]:
                    probe = list(trial)
                    probe[j] = v
                    s = model.score(tuple(probe))
                    gain = s if target == 1 else 1.0 - s
                    if step_best is None or gain > step_best[0]:
                        step_best = (gain, j, v)
            if step_best is None:
                break
            _, j, v = step_best
            trial[j] = v
            changed[j] = v
            if model.predict(tuple(trial)) == target:
                subset = tuple(sorted(changed))
                best = (len(subset), sum(_change_cost(specs[k], instance[k], changed[k]) for k in subset),
                        subset, tuple(changed[k] for k in subset))
                break

    if best is None:
        raise NoCounterfactualFound(
            f"no change set of size <= {max_changes} flips the prediction on a "
            f"{grid_levels}-level grid")

    _, _, subset, values = best
    changes = tuple((specs[j].name, instance[j], v) for j, v in zip(subset, values))
    return ExplanationArtifact(type_id="counterfactual",
                               payload=Counterfactual(changes=changes, new_label=target),
                               provenance=provenance())


def apply_changes(instance, features, changes) -> tuple:
    """Instance with a counterfactual change set applied."""
    by_name = {spec.name: i for i, spec in enumerate(features)}
    out = list(instance)
    for name, _old, new in changes:
        out[by_name[name]] = new
    return tuple(out)


# ---------------------------------------------------------------------------
# nearest neighbours (Gower-style mixed distance)


def gower_distance(a, b, features) -> float:
    total = 0.0
    for va, vb, spec in zip(a, b, features):
        if isinstance(spec, NumericFeature):
            total += abs(float(va) - float(vb)) / spec.range if spec.range else 0.0
        else:
            total += 0.0 if va == vb else 1.0
    return total / len(features)


def nearest_neighbours(data: TabularDataset, instance, k: int, seed: int = 0) -> ExplanationArtifact:
    """k rows closest to the instance, ascending distance, ties by row index."""
    if k > len(data.rows):
        raise KTooLarge(f"k={k} exceeds {len(data.rows)} rows")
    data.check_instance(instance)
    scored = [(gower_distance(instance, row, data.features), idx)
              for idx, row in enumerate(data.rows)]
    scored.sort()
    picked = tuple((data.rows[idx], data.labels[idx], float(dist)) for dist, idx in scored[:k])
    return ExplanationArtifact(
        type_id="nearest_neighbour",
        payload=Neighbours(neighbours=picked),
        provenance=Provenance(technique="gower_knn", parameters={"k": k}, seed=seed),
    )


# ---------------------------------------------------------------------------
# anchor rules


def _numeric_interval(data: TabularDataset, name: str, value: float) -> tuple[float, float]:
    """Quartile bin of the dataset column containing the instance value."""
    col = np.asarray(data.column(name), dtype=float)
    edges = np.quantile(col, [0.0, 0.25, 0.5, 0.75, 1.0])
    spec = data.feature(name)
    edges[0], edges[-1] = spec.min, spec.max
    for lo, hi in zip(edges[:-1], edges[1:]):
        if lo <= value <= hi:
            return float(lo), float(hi)
    return float(edges[0]), float(edges[-1])


def anchor_rule(model, data: TabularDataset, instance, precision_threshold: float = 0.9,
                n_samples: int = 500, seed: int = 0) -> ExplanationArtifact:
    """Greedy predicate conjunction with sampled precision >= threshold.

    Unanchored features are perturbed by resampling from the dataset's
    per-feature marginals; anchored numeric features are drawn from the
    instance's quartile interval, anchored categoricals are fixed.
    """
    if not 0.5 < precision_threshold <= 1.0:
        raise InvalidInstance("precision threshold must lie in (0.5, 1]")
    data.check_instance(instance)
    rng = np.random.default_rng(seed)
    n_feat = len(data.features)
    target = model.predict(tuple(instance))

    # base perturbations: independent draws from each feature's marginal
    base = []
    for i in range(n_feat):
        col = [row[i] for row in data.rows]
        idxs = rng.integers(0, len(col), size=n_samples)
        base.append([col[j] for j in idxs])

    intervals = {}
    for i, spec in enumerate(data.features):
        if isinstance(spec, NumericFeature):
            intervals[i] = _numeric_interval(data, spec.name, float(instance[i]))

    anchored_draws = {}
    for i, spec in enumerate(data.features):
        if isinstance(spec, NumericFeature):
            lo, hi = intervals[i]
            anchored_draws[i] = list(rng.uniform(lo, hi, size=n_samples))
        else:
            anchored_draws[i] = [instance[i]] * n_samples

    def precision(anchored: set[int]) -> float:
        rows = []
        for s in range(n_samples):
            rows.append(tuple(anchored_draws[i][s] if i in anchored else base[i][s]
                              for i in range(n_feat)))
        preds = model.predict_batch(rows) if hasattr(model, "predict_batch") else \
            np.asarray([model.predict(r) for r in rows])
        return float(np.mean(preds == target))

    anchored: set[int] = set()
    current = precision(anchored)
    while current < precision_threshold:
        step = None
        for i in range(n_feat):
            if i in anchored:
                continue
            p = precision(anchored | {i})
            if step is None or p > step[0]:
                step = (p, i)
        if step is None:
            break
        current, chosen = step
        anchored.add(chosen)
        if len(anchored) == n_feat:
            break
    if current < precision_threshold:
        raise NoAnchorFound(
            f"no conjunction reached precision {precision_threshold} (best {current:.3f})")

    predicates = []
    for i in sorted(anchored):
        spec = data.features[i]
        if isinstance(spec, NumericFeature):
            predicates.append((spec.name, "in", intervals[i]))
        else:
            predicates.append((spec.name, "==", instance[i]))
    return ExplanationArtifact(
        type_id="anchor_rule",
        payload=AnchorRule(predicates=tuple(predicates), precision=current, n_samples=n_samples),
        provenance=Provenance(technique="greedy_anchor",
                              parameters={"threshold": precision_threshold, "n_samples": n_samples},
                              seed=seed),
    )


# ---------------------------------------------------------------------------
# dataset statistics


def dataset_stats(data: TabularDataset, feature: str, seed: int = 0) -> ExplanationArtifact:
    """Histogram plus count and mean/mode for one feature."""
    spec = data.feature(feature)  # raises UnknownFeature
    col = data.column(feature)
    if isinstance(spec, NumericFeature):
        values = np.asarray(col, dtype=float)
        counts, edges = np.histogram(values, bins=10, range=(spec.min, spec.max))
        bins = tuple((f"[{lo:.6g}, {hi:.6g})", int(c))
                     for lo, hi, c in zip(edges[:-1], edges[1:], counts))
        payload = DatasetStats(feature=feature, bins=bins, count=len(col),
                               mean=float(values.mean()), mode=None)
    else:
        counts = {lvl: 0 for lvl in spec.levels}
        for v in col:
            counts[v] += 1
        mode = max(spec.levels, key=lambda l: counts[l])
        payload = DatasetStats(feature=feature,
                               bins=tuple((lvl, counts[lvl]) for lvl in spec.levels),
                               count=len(col), mean=None, mode=mode)
    return ExplanationArtifact(
        type_id="dataset_statistics", payload=payload,
        provenance=Provenance(technique="histogram_stats", parameters={"feature": feature}, seed=seed),
    )


# ---------------------------------------------------------------------------
# textual annotation (template NLG)

_TECHNIQUE_PHRASES = {
    "exact_shapley": "an exact contribution analysis of your application's details",
    "sampling_shapley": "a sampled contribution analysis of your application's details",
    "grid_counterfactual": "a search over small changes to your application",
    "gower_knn": "a comparison with the most similar past applications",
    "greedy_anchor": "a rule extracted from the decision model",
    "histogram_stats": "summary statistics of past applications",
}

_OUTCOMES = {1: "approval", 0: "rejection"}


def _label(name: str) -> str:
    return FEATURE_LABELS.get(name, name.replace("_", " "))


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:,.2f}".rstrip("0").rstrip(".")
    return str(value)


def annotate(artifact: ExplanationArtifact, instance=None) -> ExplanationArtifact:
    """Deterministic plain-language summary of another artifact."""
    payload = artifact.payload
    if isinstance(payload, TextAnnotation):
        raise UnsupportedPayload("cannot annotate a textual annotation")

    if isinstance(payload, FeatureAttribution):
        ranked = sorted(payload.weights, key=lambda w: (-abs(w[1]), w[0]))[:3]
        parts = []
        for rank, (name, weight) in enumerate(ranked):
            direction = _OUTCOMES[1] if weight > 0 else _OUTCOMES[0]
            if rank == 0:
                parts.append(f"The {_label(name)} contributed most to this decision, "
                             f"pushing it towards {direction}.")
            else:
                parts.append(f"The {_label(name)} also mattered, pushing towards {direction}.")
        text = " ".join(parts)
    elif isinstance(payload, Counterfactual):
        if not payload.changes:
            text = "No changes are needed: the application already receives the desired decision."
        else:
            steps = "; ".join(f"change the {_label(n)} from {_fmt(old)} to {_fmt(new)}"
                              for n, old, new in payload.changes)
            text = (f"To receive a different decision you could {steps}. "
                    f"With these changes the application would be "
                    f"{'approved' if payload.new_label == 1 else 'rejected'}.")
    elif isinstance(payload, Neighbours):
        k = len(payload.neighbours)
        approved = sum(1 for _r, lbl, _d in payload.neighbours if lbl == 1)
        text = (f"Among the {k} past applications most similar to yours, "
                f"{approved} were approved and {k - approved} were rejected.")
    elif isinstance(payload, AnchorRule):
        if not payload.predicates:
            text = (f"The decision is the same for virtually all applications "
                    f"(observed in {payload.precision:.0%} of sampled cases).")
        else:
            conds = " and ".join(
                f"the {_label(n)} is {_fmt(v)}" if op == "==" else
                f"the {_label(n)} is between {_fmt(v[0])} and {_fmt(v[1])}"
                for n, op, v in payload.predicates)
            text = (f"Applications where {conds} receive this decision in about "
                    f"{payload.precision:.0%} of sampled cases.")
    elif isinstance(payload, DatasetStats):
        if payload.mean is not None:
            text = (f"Across {payload.count} past applications, the average "
                    f"{_label(payload.feature)} is {_fmt(payload.mean)}.")
        else:
            text = (f"Across {payload.count} past applications, the most common "
                    f"{_label(payload.feature)} is {_fmt(payload.mode)}.")
    else:  # pragma: no cover
        raise UnsupportedPayload(type(payload).__name__)

    phrase = _TECHNIQUE_PHRASES.get(artifact.provenance.technique, "the previous explanation")
    text += f" This information comes from {phrase}."
    return ExplanationArtifact(
        type_id="text_annotation",
        payload=TextAnnotation(text=text, annotates=artifact.provenance.technique),
        provenance=Provenance(technique="template_nlg",
                              parameters={"annotates": artifact.provenance.technique},
                              seed=artifact.provenance.seed),
    )


# ---------------------------------------------------------------------------
# followup execution


@dataclass
class ExplainContext:
    """Everything a followup needs to produce its artifact."""
    model: object
    data: TabularDataset
    instance: Sequence
    baseline: Sequence | None = None
    seed: int = 0
    k: int = 3
    n_samples: int = 500
    grid_levels: int = 4
    max_changes: int = 3
    precision_threshold: float = 0.9
    stats_feature: str = "int_rate"

    def resolved_baseline(self):
        return list(self.baseline) if self.baseline is not None else self.data.baseline()


def rank_concordance(weights_a: Sequence[tuple[str, float]],
                     weights_b: Sequence[tuple[str, float]]) -> float:
    """Kendall-style concordance of two attribution orderings in [-1, 1]."""
    b_by_name = dict(weights_b)
    pairs = [(wa, b_by_name[name]) for name, wa in weights_a if name in b_by_name]
    concordant = discordant = 0
    for (a1, b1), (a2, b2) in itertools.combinations(pairs, 2):
        s = (a1 - a2) * (b1 - b2)
        if s > 0:
            concordant += 1
        elif s < 0:
            discordant += 1
    total = len(pairs) * (len(pairs) - 1) // 2
    return (concordant - discordant) / total if total else 1.0


def generate_artifact(type_id: str, ctx: ExplainContext, technique: str | None = None) -> ExplanationArtifact:
    """Produce the artifact for one explanation type from shared context."""
    if type_id == "feature_attribution":
        n = len(ctx.model.features)
        if technique == "sampling_shapley":
            return feature_attribution(ctx.model, list(ctx.instance), ctx.resolved_baseline(),
                                       n_samples=min(ctx.n_samples, (1 << n) - 1), seed=ctx.seed)
        return feature_attribution(ctx.model, list(ctx.instance), ctx.resolved_baseline(), seed=ctx.seed)
    if type_id == "counterfactual":
        return counterfactual(ctx.model, list(ctx.instance), max_changes=ctx.max_changes,
                              grid_levels=ctx.grid_levels, seed=ctx.seed)
    if type_id == "nearest_neighbour":
        return nearest_neighbours(ctx.data, list(ctx.instance), k=ctx.k, seed=ctx.seed)
    if type_id == "anchor_rule":
        return anchor_rule(ctx.model, ctx.data, list(ctx.instance),
                           precision_threshold=ctx.precision_threshold,
                           n_samples=ctx.n_samples, seed=ctx.seed)
    if type_id == "dataset_statistics":
        return dataset_stats(ctx.data, ctx.stats_feature, seed=ctx.seed)
    raise UnknownFollowupEdge(f"no technique registered for type {type_id!r}")


def run_followup(graph: IffGraph, question_id: str, kind: FollowupKind,
                 prior: ExplanationArtifact, ctx: ExplainContext,
                 e2: str | None = None) -> ExplanationArtifact:
    """Execute one followup edge of a question against a prior artifact.

    Complement to the annotation type summarizes the prior artifact;
    replacement produces the alternative type (or the same type under a
    different technique); validation additionally attaches an agreement
    score between the prior and the new artifact.
    """
    edges = followups_of(graph, question_id, frozenset())
    if e2 is None:
        matching = [edge for edge in edges if edge[1] == kind]
        if not matching:
            raise UnknownFollowupEdge(f"question {question_id!r} has no {kind.value} followup")
        e2 = matching[0][0]
    elif (e2, kind) not in edges:
        raise UnknownFollowupEdge(f"({e2}, {kind.value}) is not a followup of {question_id!r}")

    if kind is FollowupKind.COMPLEMENT:
        if e2 == "text_annotation":
            return annotate(prior, list(ctx.instance))
        return generate_artifact(e2, ctx)

    if kind is FollowupKind.REPLACEMENT:
        technique = None
        if e2 == prior.type_id and prior.type_id == "feature_attribution":
            technique = ("sampling_shapley" if prior.provenance.technique == "exact_shapley"
                         else "exact_shapley")
        return generate_artifact(e2, ctx, technique=technique)

    # validation
    if e2 == prior.type_id and prior.type_id == "feature_attribution":
        technique = ("sampling_shapley" if prior.provenance.technique == "exact_shapley"
                     else "exact_shapley")
        artifact = generate_artifact(e2, ctx, technique=technique)
        agreement = rank_concordance(prior.payload.weights, artifact.payload.weights)
        return ExplanationArtifact(type_id=artifact.type_id, payload=artifact.payload,
                                   provenance=artifact.provenance, agreement=agreement)
    if prior.type_id == "counterfactual" and e2 == "nearest_neighbour":
        cf_point = apply_changes(ctx.instance, ctx.data.features, prior.payload.changes)
        artifact = nearest_neighbours(ctx.data, list(cf_point), k=ctx.k, seed=ctx.seed)
        cf_label = ctx.model.predict(tuple(cf_point))
        labels = [lbl for _r, lbl, _d in artifact.payload.neighbours]
        agreement = (sum(1 for lbl in labels if lbl == cf_label) / len(labels)) if labels else 1.0
        return ExplanationArtifact(type_id=artifact.type_id, payload=artifact.payload,
                                   provenance=artifact.provenance, agreement=agreement)
    if prior.type_id == "feature_attribution" and e2 == "nearest_neighbour":
        artifact = generate_artifact(e2, ctx)
        target = ctx.model.predict(tuple(ctx.instance))
        labels = [lbl for _r, lbl, _d in artifact.payload.neighbours]
        agreement = (sum(1 for lbl in labels if lbl == target) / len(labels)) if labels else 1.0
        return ExplanationArtifact(type_id=artifact.type_id, payload=artifact.payload,
                                   provenance=artifact.provenance, agreement=agreement)
    # generic validation: produce the artifact and report label consistency of
    # the instance's own neighbourhood as a weak agreement signal
    artifact = generate_artifact(e2, ctx)
    target = ctx.model.predict(tuple(ctx.instance))
    nn = nearest_neighbours(ctx.data, list(ctx.instance), k=ctx.k, seed=ctx.seed)
    labels = [lbl for _r, lbl, _d in nn.payload.neighbours]
    agreement = (sum(1 for lbl in labels if lbl == target) / len(labels)) if labels else 1.0
    return ExplanationArtifact(type_id=artifact.type_id, payload=artifact.payload,
                               provenance=artifact.provenance, agreement=agreement)


# ---------------------------------------------------------------------------
# JSON serialization (tagged union)


def artifact_to_json(artifact: ExplanationArtifact) -> dict:
    p = artifact.payload
    if isinstance(p, FeatureAttribution):
        payload = {"kind": "feature_attribution",
                   "weights": [[n, w] for n, w in p.weights],
                   "base_score": p.base_score, "instance_score": p.instance_score}
    elif isinstance(p, Counterfactual):
        payload = {"kind": "counterfactual",
                   "changes": [[n, old, new] for n, old, new in p.changes],
                   "new_label": p.new_label}
    elif isinstance(p, Neighbours):
        payload = {"kind": "neighbours",
                   "neighbours": [[list(row), lbl, dist] for row, lbl, dist in p.neighbours]}
    elif isinstance(p, AnchorRule):
        payload = {"kind": "anchor_rule",
                   "predicates": [[n, op, list(v) if isinstance(v, tuple) else v]
                                  for n, op, v in p.predicates],
                   "precision": p.precision, "n_samples": p.n_samples}
    elif isinstance(p, DatasetStats):
        payload = {"kind": "dataset_stats", "feature": p.feature,
                   "bins": [[b, c] for b, c in p.bins], "count": p.count,
                   "mean": p.mean, "mode": p.mode}
    else:
        payload = {"kind": "text_annotation", "text": p.text, "annotates": p.annotates}
    return {
        "type_id": artifact.type_id,
        "payload": payload,
        "provenance": {"technique": artifact.provenance.technique,
                       "parameters": artifact.provenance.parameters,
                       "seed": artifact.provenance.seed},
        "agreement": artifact.agreement,
    }


def artifact_from_json(doc: dict) -> ExplanationArtifact:
    p = doc["payload"]
    kind = p["kind"]
    if kind == "feature_attribution":
        payload = FeatureAttribution(weights=tuple((n, w) for n, w in p["weights"]),
                                     base_score=p["base_score"], instance_score=p["instance_score"])
    elif kind == "counterfactual":
        payload = Counterfactual(changes=tuple((n, old, new) for n, old, new in p["changes"]),
                                 new_label=p["new_label"])
    elif kind == "neighbours":
        payload = Neighbours(neighbours=tuple((tuple(row), lbl, dist)
                                              for row, lbl, dist in p["neighbours"]))
    elif kind == "anchor_rule":
        payload = AnchorRule(predicates=tuple((n, op, tuple(v) if isinstance(v, list) else v)
                                              for n, op, v in p["predicates"]),
                             precision=p["precision"], n_samples=p["n_samples"])
    elif kind == "dataset_stats":
        payload = DatasetStats(feature=p["feature"], bins=tuple((b, c) for b, c in p["bins"]),
                               count=p["count"], mean=p["mean"], mode=p["mode"])
    elif kind == "text_annotation":
        payload = TextAnnotation(text=p["text"], annotates=p.get("annotates"))
    else:
        raise SchemaError(f"unknown payload kind {kind!r}")
    prov = doc["provenance"]
    return ExplanationArtifact(type_id=doc["type_id"], payload=payload,
                               provenance=Provenance(technique=prov["technique"],
                                                     parameters=prov["parameters"],
                                                     seed=prov["seed"]),
                               agreement=doc.get("agreement"))
