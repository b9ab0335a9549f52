/** Pure HTML-string renderers for every artifact payload and prompt kind. */

import type {
  AnchorRulePayload,
  Artifact,
  CounterfactualPayload,
  DatasetStatsPayload,
  FeatureAttributionPayload,
  FollowupOption,
  MenuQuestion,
  NeighboursPayload,
  QuestionnaireItem,
  TextAnnotationPayload,
} from "./protocol.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&#39;");
}

function num(value: number, digits = 3): string {
  return value.toFixed(digits);
}

function cell(value: number | string): string {
  return typeof value === "number" ? num(value, 2) : escapeHtml(value);
}

function renderFeatureAttribution(p: FeatureAttributionPayload): string {
  const maxAbs = Math.max(1e-12, ...p.weights.map(([, w]) => Math.abs(w)));
  const rows = p.weights
    .map(([name, weight]) => {
      const width = Math.round((Math.abs(weight) / maxAbs) * 100);
      const side = weight >= 0 ? "pos" : "neg";
      return (
        `<tr><td class="feature">${escapeHtml(name)}</td>` +
        `<td class="weight">${num(weight)}</td>` +
        `<td class="bar"><span class="${side}" style="width:${width}%"></span></td></tr>`
      );
    })
    .join("");
  return (
    `<div class="artifact attribution">` +
    `<p>Model score for this case: <strong>${num(p.instance_score)}</strong> ` +
    `(baseline ${num(p.base_score)}).</p>` +
    `<table><thead><tr><th>Feature</th><th>Contribution</th><th></th></tr></thead>` +
    `<tbody>${rows}</tbody></table></div>`
  );
}

function renderCounterfactual(p: CounterfactualPayload): string {
  const items = p.changes
    .map(
      ([name, from, to]) =>
        `<li><strong>${escapeHtml(name)}</strong>: ${cell(from)} &rarr; ${cell(to)}</li>`,
    )
    .join("");
  const outcome = p.new_label === 1 ? "approved" : "rejected";
  return (
    `<div class="artifact counterfactual">` +
    `<p>The decision would change to <strong>${outcome}</strong> if:</p>` +
    `<ul>${items}</ul></div>`
  );
}

function renderNeighbours(p: NeighboursPayload): string {
  const rows = p.neighbours
    .map(([values, label, distance]) => {
      const cells = values.map((v) => `<td>${cell(v)}</td>`).join("");
      return `<tr>${cells}<td>${label === 1 ? "approved" : "rejected"}</td><td>${num(distance)}</td></tr>`;
    })
    .join("");
  return (
    `<div class="artifact neighbours">` +
    `<p>The ${p.neighbours.length} most similar recorded cases:</p>` +
    `<table><tbody>${rows}</tbody></table></div>`
  );
}

function renderAnchorRule(p: AnchorRulePayload): string {
  const clauses = p.predicates
    .map((pred) => {
      if (pred[1] === "in") {
        const [lo, hi] = pred[2];
        return `<li>${escapeHtml(pred[0])} between ${num(lo, 1)} and ${num(hi, 1)}</li>`;
      }
      return `<li>${escapeHtml(pred[0])} is ${escapeHtml(pred[2])}</li>`;
    })
    .join("");
  return (
    `<div class="artifact anchor">` +
    `<p>The decision stays the same for ${Math.round(p.precision * 100)}% of ` +
    `${p.n_samples} similar cases whenever:</p><ul>${clauses}</ul></div>`
  );
}

function renderDatasetStats(p: DatasetStatsPayload): string {
  const maxCount = Math.max(1, ...p.bins.map(([, c]) => c));
  const rows = p.bins
    .map(([label, count]) => {
      const width = Math.round((count / maxCount) * 100);
      return (
        `<tr><td>${escapeHtml(label)}</td><td>${count}</td>` +
        `<td class="bar"><span style="width:${width}%"></span></td></tr>`
      );
    })
    .join("");
  const mean = p.mean === null ? "" : ` Average: ${num(p.mean, 2)}.`;
  const mode = p.mode === null ? "" : ` Most common: ${escapeHtml(p.mode)}.`;
  return (
    `<div class="artifact stats">` +
    `<p>Distribution of <strong>${escapeHtml(p.feature)}</strong> over ` +
    `${p.count} cases.${mean}${mode}</p>` +
    `<table><tbody>${rows}</tbody></table></div>`
  );
}

function renderTextAnnotation(p: TextAnnotationPayload): string {
  return `<div class="artifact annotation"><p>${escapeHtml(p.text)}</p></div>`;
}

export function renderArtifact(artifact: Artifact): string {
  let body: string;
  switch (artifact.payload.kind) {
    case "feature_attribution":
      body = renderFeatureAttribution(artifact.payload);
      break;
    case "counterfactual":
      body = renderCounterfactual(artifact.payload);
      break;
    case "neighbours":
      body = renderNeighbours(artifact.payload);
      break;
    case "anchor_rule":
      body = renderAnchorRule(artifact.payload);
      break;
    case "dataset_stats":
      body = renderDatasetStats(artifact.payload);
      break;
    case "text_annotation":
      body = renderTextAnnotation(artifact.payload);
      break;
    default: {
      const unknown: never = artifact.payload;
      throw new Error(`unknown artifact payload: ${JSON.stringify(unknown).slice(0, 80)}`);
    }
  }
  if (artifact.agreement !== undefined && artifact.agreement !== null) {
    body += `<p class="agreement">Cross-check agreement: ${num(artifact.agreement, 2)}</p>`;
  }
  return body;
}

export function renderTarget(payload: {
  instance: Record<string, number | string>;
  prediction: number;
  score: number;
}): string {
  const rows = Object.entries(payload.instance)
    .map(([name, value]) => `<tr><td>${escapeHtml(name)}</td><td>${cell(value)}</td></tr>`)
    .join("");
  const outcome = payload.prediction === 1 ? "approved" : "rejected";
  return (
    `<div class="target"><p>Your application was <strong>${outcome}</strong> ` +
    `(score ${num(payload.score)}).</p>` +
    `<table><tbody>${rows}</tbody></table></div>`
  );
}

export function renderMenu(questions: MenuQuestion[]): string {
  const items = questions
    .map(
      (q) =>
        `<li><button data-question="${escapeHtml(q.id)}">${escapeHtml(q.text)}</button>` +
        ` <span class="intent">${escapeHtml(q.intent)}</span></li>`,
    )
    .join("");
  return `<ul class="menu">${items}</ul>`;
}

export function renderFollowups(followups: FollowupOption[]): string {
  const items = followups
    .map(
      (f) =>
        `<li><button data-followup="${escapeHtml(f.kind)}">${escapeHtml(f.label)}</button></li>`,
    )
    .join("");
  return `<ul class="followups">${items}</ul>`;
}

export function renderQuestionnaire(items: QuestionnaireItem[]): string {
  const rows = items
    .map((item) => {
      const radios = Array.from({ length: item.scale }, (_, i) => i + 1)
        .map(
          (level) =>
            `<label><input type="radio" name="${escapeHtml(item.id)}" value="${level}">${level}</label>`,
        )
        .join("");
      return `<li><p>${escapeHtml(item.text)}</p><div class="scale">${radios}</div></li>`;
    })
    .join("");
  return `<ol class="questionnaire">${rows}</ol>`;
}
