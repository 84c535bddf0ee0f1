import { describe, expect, it } from 'vitest';

import { ApiClient, ApiError } from '../src/api.js';

function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { 'content-type': 'application/json' },
  });
}

describe('ApiClient.nextTask', () => {
  it('returns the task payload', async () => {
    const api = new ApiClient('', async (url) => {
      expect(url).toBe('/api/task?rater=r1&kind=long_take');
      return jsonResponse({ task_id: 't1', kind: 'long_take', media_url: '/media/v', instructions: '' });
    });
    const task = await api.nextTask('r1', 'long_take');
    expect(task?.task_id).toBe('t1');
  });

  it('returns null when the study is complete', async () => {
    const api = new ApiClient('', async () => jsonResponse({ done: true }));
    expect(await api.nextTask('r1', 'long_take')).toBeNull();
  });

  it('wraps network failures as retryable errors', async () => {
    const api = new ApiClient('', async () => {
      throw new TypeError('fetch failed');
    });
    await expect(api.nextTask('r1', 'long_take')).rejects.toMatchObject({ retryable: true });
  });

  it('marks client errors as non-retryable', async () => {
    const api = new ApiClient('', async () => jsonResponse({ detail: 'bad kind' }, 422));
    await expect(api.nextTask('r1', 'long_take')).rejects.toMatchObject({ retryable: false });
  });
});

describe('ApiClient.submitResponse', () => {
  it('acks a stored response', async () => {
    const api = new ApiClient('', async (url, init) => {
      expect(url).toBe('/api/response');
      expect(JSON.parse(String(init?.body))).toEqual({
        task_id: 't1',
        rater_id: 'r1',
        answer: 2,
      });
      return jsonResponse({ ok: true });
    });
    expect(await api.submitResponse('t1', 'r1', 2)).toBe('ok');
  });

  it('reports duplicate submissions as conflict', async () => {
    const api = new ApiClient('', async () => jsonResponse({ detail: 'dup' }, 409));
    expect(await api.submitResponse('t1', 'r1', 2)).toBe('conflict');
  });

  it('throws ApiError on server failures', async () => {
    const api = new ApiClient('', async () => jsonResponse({}, 500));
    await expect(api.submitResponse('t1', 'r1', 2)).rejects.toBeInstanceOf(ApiError);
  });
});
