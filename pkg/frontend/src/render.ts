import type { StudyKind, TaskPayload } from './types.js';

function escapeHtml(text: string): string {
  return text
    .replace(/&/g, '&amp;')
    .replace(/</g, '&lt;')
    .replace(/>/g, '&gt;')
    .replace(/"/g, '&quot;');
}

/**
 * One caption card. Both sides go through this exact template so no
 * styling or ordering cue can correlate with which caption is which.
 */
export function captionCard(side: 'A' | 'B', text: string): string {
  return `<section class="caption-card" data-side="${side}">` +
    `<h3>Caption ${side}</h3><p>${escapeHtml(text)}</p></section>`;
}

export function captionPair(captions: { A: string; B: string }): string {
  return captionCard('A', captions.A) + captionCard('B', captions.B);
}

export interface AnswerOption {
  label: string;
  key: string;
  value: string;
}

/** The answer widget definition for each study kind (also the keymap). */
export function answerOptions(kind: StudyKind): AnswerOption[] {
  if (kind === 'long_take') {
    return [
      { label: 'Yes, one continuous take', key: 'y', value: 'true' },
      { label: 'No, it has a cut', key: 'n', value: 'false' },
    ];
  }
  if (kind === 'dynamic_degree') {
    return [
      { label: '1 - not dynamic', key: '1', value: '1' },
      { label: '2 - somewhat dynamic', key: '2', value: '2' },
      { label: '3 - very dynamic', key: '3', value: '3' },
    ];
  }
  return [
    { label: 'Caption A', key: 'a', value: 'A' },
    { label: 'Caption B', key: 'b', value: 'B' },
  ];
}

export function parseAnswerValue(kind: StudyKind, value: string): boolean | number | 'A' | 'B' {
  if (kind === 'long_take') return value === 'true';
  if (kind === 'dynamic_degree') return Number(value);
  return value as 'A' | 'B';
}

export function taskHtml(task: TaskPayload): string {
  const media = `<img class="clip" src="${task.media_url}" alt="video clip preview">`;
  const captions = task.captions ? `<div class="captions">${captionPair(task.captions)}</div>` : '';
  return `${media}${captions}`;
}
