/** Thin typed client over the study service API.
 *
 * Distinguishes transport failures (retryable, nothing was necessarily
 * stored) from service errors carrying a {code, message} body, so the flow
 * layer can retry safely without double-submitting.
 */

import type {
  ApiErrorBody,
  Arm,
  NextResponse,
  Question,
  SessionInfo,
} from "./types.js";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ServiceError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
    readonly unlockAt: number | null = null,
  ) {
    super(message);
  }
}

export class NetworkError extends Error {}

async function request<T>(
  fetchFn: FetchLike,
  method: string,
  path: string,
  body?: unknown,
): Promise<T> {
  let response: Response;
  try {
    response = await fetchFn(path, {
      method,
      headers: body === undefined ? {} : { "Content-Type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
  } catch (err) {
    throw new NetworkError(String(err));
  }
  if (!response.ok) {
    let parsed: ApiErrorBody | null = null;
    try {
      parsed = (await response.json()) as ApiErrorBody;
    } catch {
      parsed = null;
    }
    throw new ServiceError(
      response.status,
      parsed?.code ?? "http_error",
      parsed?.message ?? `HTTP ${response.status}`,
      parsed?.unlock_at ?? null,
    );
  }
  return (await response.json()) as T;
}

export class StudyApi {
  constructor(private readonly fetchFn: FetchLike = (i, init) => fetch(i, init)) {}

  openSession(studyId: string, annotatorId: string, arm: Arm): Promise<SessionInfo> {
    return request<SessionInfo>(
      this.fetchFn,
      "POST",
      `/api/studies/${encodeURIComponent(studyId)}/sessions`,
      { annotator_id: annotatorId, arm },
    );
  }

  nextItem(sessionId: string): Promise<NextResponse> {
    return request<NextResponse>(
      this.fetchFn,
      "GET",
      `/api/sessions/${encodeURIComponent(sessionId)}/next`,
    );
  }

  submitDecision(
    sessionId: string,
    incidentId: string,
    factorId: string,
    decision: boolean,
  ): Promise<{ ok: boolean }> {
    return request(
      this.fetchFn,
      "POST",
      `/api/sessions/${encodeURIComponent(sessionId)}/decision`,
      { incident_id: incidentId, factor_id: factorId, decision },
    );
  }

  submitQuestionnaire(
    sessionId: string,
    answers: Record<string, number>,
  ): Promise<{ ok: boolean }> {
    return request(
      this.fetchFn,
      "POST",
      `/api/sessions/${encodeURIComponent(sessionId)}/questionnaire`,
      { answers },
    );
  }

  questionnaire(): Promise<Question[]> {
    return request<Question[]>(this.fetchFn, "GET", "/api/questionnaire");
  }
}
