// JSON payload shapes of the HTTP API, as the service emits them.
// The app speaks only these documented shapes; nothing here reaches into
// server internals.

export type FeedbackMode = "Manual" | "Auto";
export type CardStatus = "SalientOnly" | "Full" | "Omitted";

export interface PredicateJson {
  feature: string;
  op: ">=" | "<=" | "==";
  threshold: number;
}

export interface FeedbackItemJson {
  feature: string;
  category: string;
  mode: FeedbackMode;
  text: string;
  value: number | null;
  value_display: string | null;
  prompt: string | null;
  choices: string[] | null;
  why: string | null;
  rule: PredicateJson | null;
}

export interface FeedbackCardJson {
  format_version: number;
  event_id: string;
  status: CardStatus;
  items: FeedbackItemJson[];
  on_demand_expansion: boolean;
  stub: string | null;
  categories: string[];
}

export interface FeedbackResponse {
  format_version: number;
  user_id: string;
  week: string;
  cards: FeedbackCardJson[];
}

export interface ElicitationRequest {
  event_id: string;
  user_id: string;
  feature: string;
  answer: string;
  rating: number;
  submission_id: string;
}

export interface ElicitationAck {
  format_version: number;
  seq: number;
  created: boolean;
  canonical_answer: string;
  label_count: number;
}

export interface LabelCounts {
  total: number;
  Manual: number;
  Auto: number;
}

export interface StoredModelStatus {
  n_labels: number;
  trained_at: number;
}

export interface StatusResponse {
  format_version: number;
  events: number;
  labels: LabelCounts;
  models: Record<string, StoredModelStatus | null>;
}

export interface TrainOutcomeJson {
  mode: FeedbackMode;
  trained: boolean;
  n_labels: number;
  reason: string | null;
  cv: unknown;
  model_fingerprint: string | null;
}

export interface TrainResponse {
  format_version: number;
  outcomes: TrainOutcomeJson[];
  schema_fingerprint: string | null;
  n_features: number | null;
}
