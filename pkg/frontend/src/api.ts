import type { Answer, StudyKind, TaskPayload } from './types.js';

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(message: string, readonly retryable: boolean) {
    super(message);
  }
}

export type SubmitResult = 'ok' | 'conflict';

/**
 * Thin typed client over the rating service HTTP API. The fetch function is
 * injectable so tests can drive every branch without a server.
 */
export class ApiClient {
  constructor(
    private readonly baseUrl: string = '',
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private url(path: string): string {
    return `${this.baseUrl}${path}`;
  }

  /** Next unanswered task for this rater, or null once the study is done. */
  async nextTask(raterId: string, kind: StudyKind): Promise<TaskPayload | null> {
    let resp: Response;
    try {
      resp = await this.fetchFn(
        this.url(`/api/task?rater=${encodeURIComponent(raterId)}&kind=${kind}`),
      );
    } catch (err) {
      throw new ApiError(`network failure: ${String(err)}`, true);
    }
    if (!resp.ok) {
      throw new ApiError(`task fetch failed: HTTP ${resp.status}`, resp.status >= 500);
    }
    const body = (await resp.json()) as TaskPayload & { done?: boolean };
    return body.done ? null : body;
  }

  /** Persist one answer; 'conflict' means another submission won the race. */
  async submitResponse(taskId: string, raterId: string, answer: Answer): Promise<SubmitResult> {
    let resp: Response;
    try {
      resp = await this.fetchFn(this.url('/api/response'), {
        method: 'POST',
        headers: { 'content-type': 'application/json' },
        body: JSON.stringify({ task_id: taskId, rater_id: raterId, answer }),
      });
    } catch (err) {
      throw new ApiError(`network failure: ${String(err)}`, true);
    }
    if (resp.status === 409) return 'conflict';
    if (!resp.ok) {
      throw new ApiError(`submit failed: HTTP ${resp.status}`, resp.status >= 500);
    }
    return 'ok';
  }

  async metrics(kind: StudyKind): Promise<Record<string, unknown>> {
    const resp = await this.fetchFn(this.url(`/api/metrics?kind=${kind}`));
    if (!resp.ok) throw new ApiError(`metrics failed: HTTP ${resp.status}`, false);
    return (await resp.json()) as Record<string, unknown>;
  }
}
