import { ApiClient } from './api.js';
import { answerOptions, parseAnswerValue, taskHtml } from './render.js';
import { TaskSession } from './state.js';
import { STUDY_KINDS, type StudyKind } from './types.js';

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
};

function studyKindFromQuery(): StudyKind {
  const kind = new URLSearchParams(location.search).get('kind');
  return (STUDY_KINDS as string[]).includes(kind ?? '') ? (kind as StudyKind) : 'long_take';
}

function raterIdFromQuery(): string {
  const rater = new URLSearchParams(location.search).get('rater');
  if (rater) return rater;
  const generated = `rater-${Math.random().toString(36).slice(2, 8)}`;
  const params = new URLSearchParams(location.search);
  params.set('rater', generated);
  history.replaceState(null, '', `?${params}`);
  return generated;
}

const session = new TaskSession(new ApiClient(), raterIdFromQuery(), studyKindFromQuery());

function render(): void {
  $('rater').textContent = session.raterId;
  $('kind').textContent = session.kind.replace('_', ' ');
  $('progress').textContent = `${session.answered} answered`;
  const stage = $('stage');
  const controls = $('controls');
  const banner = $('banner');
  const submit = $<HTMLButtonElement>('submit');

  banner.textContent = session.notice || (session.phase === 'error' ? session.lastError : '');
  banner.className = session.phase === 'error' ? 'banner error' : session.notice ? 'banner' : 'hidden';

  if (session.phase === 'loading' || session.phase === 'idle') {
    stage.innerHTML = '<p class="hint">loading…</p>';
    controls.innerHTML = '';
    submit.disabled = true;
    return;
  }
  if (session.phase === 'complete') {
    stage.innerHTML = '<p class="done">Study complete, thank you!</p>';
    controls.innerHTML = '';
    submit.disabled = true;
    return;
  }
  if (session.phase === 'error') {
    stage.innerHTML = '<p class="hint">could not reach the rating service</p>';
    controls.innerHTML = '<button id="retry">Retry</button>';
    $('retry').onclick = () => void advance();
    submit.disabled = true;
    return;
  }

  const task = session.current;
  if (!task) return;
  stage.innerHTML = `<p class="instructions">${task.instructions}</p>${taskHtml(task)}`;
  controls.innerHTML = answerOptions(session.kind)
    .map(
      (opt) =>
        `<label class="option"><input type="radio" name="answer" value="${opt.value}"` +
        `${String(session.selected) === opt.value ? ' checked' : ''}>` +
        `${opt.label} <kbd>${opt.key}</kbd></label>`,
    )
    .join('');
  controls.querySelectorAll<HTMLInputElement>('input[name=answer]').forEach((input) => {
    input.onchange = () => {
      session.select(parseAnswerValue(session.kind, input.value));
      render();
    };
  });
  submit.disabled = !session.canSubmit || session.phase !== 'ready';
}

async function advance(): Promise<void> {
  await session.loadNext();
  render();
}

async function submitCurrent(): Promise<void> {
  if (!session.canSubmit) return;
  await session.submit();
  render();
}

document.addEventListener('keydown', (event) => {
  if (session.phase !== 'ready') return;
  const key = event.key.toLowerCase();
  if (key === 'enter') {
    void submitCurrent();
    return;
  }
  for (const opt of answerOptions(session.kind)) {
    if (opt.key === key) {
      session.select(parseAnswerValue(session.kind, opt.value));
      render();
      return;
    }
  }
});

window.addEventListener('DOMContentLoaded', () => {
  $<HTMLButtonElement>('submit').onclick = () => void submitCurrent();
  void advance();
});
