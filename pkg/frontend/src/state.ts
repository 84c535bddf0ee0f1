import { ApiClient, ApiError } from './api.js';
import { isValidAnswer, type Answer, type Phase, type StudyKind, type TaskPayload } from './types.js';

/**
 * Session state machine for one rater working through one study.
 *
 * All persistence is server-side: the machine never caches answers beyond
 * the in-flight submission, so reloading the page always converges back to
 * server truth. Submission advances optimistically only after the server
 * acknowledges; a duplicate-submission conflict skips forward with a notice.
 */
export class TaskSession {
  phase: Phase = 'idle';
  current: TaskPayload | null = null;
  selected: Answer | null = null;
  answered = 0;
  notice = '';
  lastError = '';

  constructor(
    private readonly api: ApiClient,
    readonly raterId: string,
    readonly kind: StudyKind,
  ) {}

  /** Fetch and expose the next task; terminal phases: ready | complete | error. */
  async loadNext(): Promise<void> {
    this.phase = 'loading';
    this.selected = null;
    try {
      const task = await this.api.nextTask(this.raterId, this.kind);
      if (task === null) {
        this.current = null;
        this.phase = 'complete';
        return;
      }
      this.current = task;
      this.phase = 'ready';
    } catch (err) {
      // the current answer (if any) is never dropped by a failed fetch
      this.phase = 'error';
      this.lastError = err instanceof ApiError ? err.message : String(err);
    }
  }

  /** Record a candidate answer; rejected unless it fits the task kind. */
  select(answer: Answer): boolean {
    if (this.phase !== 'ready' || this.current === null) return false;
    if (!isValidAnswer(this.kind, answer)) return false;
    this.selected = answer;
    return true;
  }

  get canSubmit(): boolean {
    return this.phase === 'ready' && this.current !== null && this.selected !== null;
  }

  /** Submit the selection; advances only after the server acknowledges. */
  async submit(): Promise<void> {
    if (!this.canSubmit || this.current === null || this.selected === null) return;
    const task = this.current;
    const answer = this.selected;
    this.phase = 'submitting';
    this.notice = '';
    try {
      const result = await this.api.submitResponse(task.task_id, this.raterId, answer);
      if (result === 'ok') {
        this.answered += 1;
      } else {
        this.notice = `task ${task.task_id} was already answered; skipped`;
      }
      await this.loadNext();
    } catch (err) {
      // stay on the task with the selection intact so a retry can't lose data
      this.phase = 'ready';
      this.selected = answer;
      this.lastError = err instanceof ApiError ? err.message : String(err);
    }
  }
}
