/** Wire protocol types, mirroring the server's wire_schema.json. */

export const PROTO_VERSION = "1";

export type FollowupKind = "Complement" | "Replacement" | "Validation";
export type Assignment = "random" | "A" | "B";

// -- artifacts ---------------------------------------------------------------

export interface Provenance {
  technique: string;
  parameters: Record<string, unknown>;
  seed: number;
}

export interface FeatureAttributionPayload {
  kind: "feature_attribution";
  base_score: number;
  instance_score: number;
  weights: [string, number][];
}

export interface CounterfactualPayload {
  kind: "counterfactual";
  changes: [string, number | string, number | string][];
  new_label: number;
}

export interface NeighboursPayload {
  kind: "neighbours";
  neighbours: [(number | string)[], number, number][];
}

export type AnchorPredicate =
  | [string, "in", [number, number]]
  | [string, "==", string];

export interface AnchorRulePayload {
  kind: "anchor_rule";
  n_samples: number;
  precision: number;
  predicates: AnchorPredicate[];
}

export interface DatasetStatsPayload {
  kind: "dataset_stats";
  feature: string;
  count: number;
  mean: number | null;
  mode: string | null;
  bins: [string, number][];
}

export interface TextAnnotationPayload {
  kind: "text_annotation";
  text: string;
  annotates: string;
}

export type ArtifactPayload =
  | FeatureAttributionPayload
  | CounterfactualPayload
  | NeighboursPayload
  | AnchorRulePayload
  | DatasetStatsPayload
  | TextAnnotationPayload;

export interface Artifact {
  type_id: string;
  payload: ArtifactPayload;
  provenance: Provenance;
  agreement?: number | null;
}

// -- client frames -----------------------------------------------------------

export type ClientMessage =
  | { type: "start"; payload: { proto_version: string; participant_id: string; assignment?: Assignment } }
  | { type: "choose_question"; payload: { question_id: string } }
  | { type: "choose_followup"; payload: { kind: FollowupKind } }
  | { type: "end_explanation"; payload: Record<string, never> }
  | { type: "begin_argument"; payload: Record<string, never> }
  | { type: "argue"; payload: { text: string } }
  | { type: "questionnaire"; payload: { item_id: string; value: number } }
  | { type: "questionnaire"; payload: { responses: Record<string, number> } }
  | { type: "free_text"; payload: { text: string } };

// -- server frames -----------------------------------------------------------

export interface MenuQuestion {
  id: string;
  text: string;
  intent: string;
}

export interface FollowupOption {
  kind: FollowupKind;
  label: string;
  type_id: string;
}

export interface QuestionnaireItem {
  id: string;
  text: string;
  scale: number;
}

export type ServerMessage =
  | { type: "session_started"; payload: { proto_version: string; session_id: string; token: string; group: "A" | "B" } }
  | { type: "version_mismatch"; payload: { server: string; client: string } }
  | { type: "error"; payload: { message: string } }
  | { type: "persona"; payload: { group: string } }
  | { type: "target"; payload: { instance: Record<string, number | string>; prediction: number; score: number } }
  | { type: "menu"; payload: { questions: MenuQuestion[] } }
  | { type: "followup_menu"; payload: { followups: FollowupOption[]; questions: MenuQuestion[] } }
  | { type: "explanation"; payload: { artifact_id: string; artifact: Artifact } }
  | { type: "annotation"; payload: { artifact_id: string; artifact: Artifact } }
  | { type: "eval_prompt"; payload: { item_id: string; scale: number; text: string } }
  | { type: "questionnaire"; payload: { items: QuestionnaireItem[] } }
  | { type: "free_text_prompt"; payload: { min_words: number } }
  | { type: "protocol_error"; payload: { message: string } }
  | { type: "bye"; payload: Record<string, never> };

export function parseServerMessage(raw: string): ServerMessage {
  const doc = JSON.parse(raw) as { type?: unknown; payload?: unknown };
  if (typeof doc.type !== "string" || typeof doc.payload !== "object" || doc.payload === null) {
    throw new Error(`malformed server frame: ${raw.slice(0, 120)}`);
  }
  return doc as ServerMessage;
}
