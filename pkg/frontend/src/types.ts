export type StudyKind = 'long_take' | 'dynamic_degree' | 'caption_pref';

export type Answer = boolean | number | 'A' | 'B';

export interface TaskPayload {
  task_id: string;
  kind: StudyKind;
  media_url: string;
  instructions: string;
  captions?: { A: string; B: string };
}

export type Phase =
  | 'idle'
  | 'loading'
  | 'ready'
  | 'submitting'
  | 'complete'
  | 'error';

export const STUDY_KINDS: StudyKind[] = ['long_take', 'dynamic_degree', 'caption_pref'];

/** Client-side mirror of the server's answer typing per study kind. */
export function isValidAnswer(kind: StudyKind, answer: Answer): boolean {
  if (kind === 'long_take') return typeof answer === 'boolean';
  if (kind === 'dynamic_degree') {
    return typeof answer === 'number' && Number.isInteger(answer) && answer >= 1 && answer <= 3;
  }
  return answer === 'A' || answer === 'B';
}
