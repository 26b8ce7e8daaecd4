/** Payload types mirroring the annotation service JSON API. */

export type Arm = "control" | "intervention";

export interface HighlightSpan {
  report: "cme" | "le";
  index: number;
  char_start: number;
  char_end: number;
  text: string;
}

export interface Progress {
  done: number;
  total: number;
}

/** One annotation task as served by GET /api/sessions/{id}/next. */
export interface ItemView {
  done: false;
  arm: Arm;
  incident_id: string;
  factor_id: string;
  factor_name: string;
  factor_definition: string;
  cme_report: string;
  le_report: string;
  highlights: HighlightSpan[];
  progress: Progress;
}

export interface SessionDone {
  done: true;
  progress: Progress;
}

export type NextResponse = ItemView | SessionDone;

export interface SessionInfo {
  session_id: string;
  study_id: string;
  arm: Arm;
  total_items: number;
}

export interface Question {
  id: string;
  text: string;
  scale: string[];
}

export interface ApiErrorBody {
  code: string;
  message: string;
  unlock_at?: number | null;
}
