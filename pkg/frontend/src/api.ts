/** Typed client for the session service HTTP API. */

export interface UnitDoc {
  id: string;
  kind: 'asset' | 'assessment';
  payload_ref: string;
  mastery_score?: number;
  time_limit?: number;
}

export interface SessionView {
  session_id: string;
  course_id: string;
  status: 'active' | 'completed' | 'abandoned';
  tick: number;
  breadcrumbs: string[];
  position: 'unit' | 'entry' | 'exit' | 'completed';
  current_unit: UnitDoc | null;
  available_events: string[];
  attempts: number;
}

export type ExternalAction = 'next' | 'back' | 'submit';

export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
    readonly availableEvents: string[] = [],
  ) {
    super(message);
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class SessionApi {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchFn: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method, headers: { 'Content-Type': 'application/json' } };
    if (body !== undefined) init.body = JSON.stringify(body);
    const response = await this.fetchFn(`${this.baseUrl}${path}`, init);
    const text = await response.text();
    const doc = text ? JSON.parse(text) : null;
    if (!response.ok) {
      const message = doc && doc.error ? String(doc.error) : `HTTP ${response.status}`;
      const available = doc && Array.isArray(doc.available_events) ? doc.available_events : [];
      throw new ApiError(response.status, message, available);
    }
    return doc as T;
  }

  courses(): Promise<{ courses: string[] }> {
    return this.request('GET', '/courses');
  }

  createSession(courseId: string, strategy?: unknown[]): Promise<SessionView> {
    const body: Record<string, unknown> = { course_id: courseId };
    if (strategy) body.strategy = strategy;
    return this.request('POST', '/sessions', body);
  }

  getSession(sessionId: string): Promise<SessionView> {
    return this.request('GET', `/sessions/${sessionId}`);
  }

  postEvent(sessionId: string, type: ExternalAction, score?: number): Promise<SessionView> {
    const body: Record<string, unknown> = { type };
    if (score !== undefined) body.score = score;
    return this.request('POST', `/sessions/${sessionId}/events`, body);
  }
}
