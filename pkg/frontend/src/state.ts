// Pure view-model helpers: progress, error formatting, and chart inputs.
// Kept free of DOM and network so they are trivially unit-testable.

import { ApiError, EpochMetrics, ServerState } from "./api.js";

export function progressLabel(state: ServerState): string {
  return `${state.tasks_submitted}/${state.tasks_total}`;
}

export function canAdvance(state: ServerState): boolean {
  return (
    state.epoch < state.max_epochs &&
    state.tasks_total > 0 &&
    state.tasks_submitted === state.tasks_total
  );
}

export function runFinished(state: ServerState): boolean {
  return state.epoch >= state.max_epochs;
}

// Each error family renders with its own label so an annotator can tell a
// stale task (404) from a double submission (409) from a bad payload or an
// incomplete epoch (422 variants).
export function formatError(err: unknown): string {
  if (err instanceof ApiError) {
    switch (err.code) {
      case "UnknownTask":
        return `Task no longer exists (404): ${err.detail}`;
      case "AlreadySubmitted":
        return `Already submitted with a different answer (409): ${err.detail}`;
      case "EpochInProgress":
        return `Epoch still open (409): ${err.detail}`;
      case "EpochIncomplete":
        return `Epoch incomplete (422): ${err.detail}`;
      case "BadVectorDim":
        return `Bad caption vector (422): ${err.detail}`;
      case "DuplicateCounterpart":
        return `Counterpart already used (422): ${err.detail}`;
      case "BudgetExhausted":
        return `Run finished (409): ${err.detail}`;
      default:
        return `${err.code} (${err.status}): ${err.detail}`;
    }
  }
  return `Service unreachable: ${String(err)}`;
}

export interface SeriesPoint {
  x: number; // paired fraction
  y: number; // recall in [0, 1]
}

export function chartSeries(
  history: EpochMetrics[],
  k = "1",
): { text: SeriesPoint[]; image: SeriesPoint[] } {
  const text: SeriesPoint[] = [];
  const image: SeriesPoint[] = [];
  for (const m of history) {
    if (k in m.r_at_k_text) {
      text.push({ x: m.paired_fraction, y: m.r_at_k_text[k] });
    }
    if (k in m.r_at_k_image) {
      image.push({ x: m.paired_fraction, y: m.r_at_k_image[k] });
    }
  }
  return { text, image };
}

// Display precision matches the metrics CSV to one decimal in percentage
// points: a chart label and the exported CSV never disagree visibly.
export function formatRecall(value: number): string {
  return (value * 100).toFixed(1);
}

export function csvRecallsForK(csv: string, k = "1"): number[] {
  const out: number[] = [];
  for (const line of csv.trim().split("\n").slice(1)) {
    const [, , , kk, recall] = line.split(",");
    if (kk === k) {
      out.push(Number(recall));
    }
  }
  return out;
}
