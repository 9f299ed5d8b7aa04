import { describe, expect, it } from 'vitest';

import { ApiClient, SentenceDetail, SentenceSummary } from '../src/api';
import { InspectFlow, thumbnailFor } from '../src/inspect';

const SUMMARIES: SentenceSummary[] = [
  { sid: 0, source: 'a man plays guitar', ranked: ['guitar', 'plays', 'man'],
    queries: ['guitar', 'guitar plays', 'guitar plays man',
              'guitar plays man guitar', 'guitar plays man guitar plays'],
    fallback: false },
  { sid: 1, source: 'the of the', ranked: ['the', 'of'],
    queries: ['the', 'the of', 'the of the', 'the of the of', 'the of the of the'],
    fallback: true },
];

const DETAIL: SentenceDetail = {
  ...SUMMARIES[0],
  images: [
    { m: 0, query: 'guitar', status: 'ok', hash: 'aaa', url: 'fixture://0' },
    { m: 1, query: 'guitar plays', status: 'ok', hash: 'bbb', url: 'fixture://1' },
    { m: 2, query: 'guitar plays man', status: 'failed', hash: null, url: '' },
    { m: 3, query: 'guitar plays man guitar', status: 'ok', hash: 'ccc', url: 'fixture://3' },
    { m: 4, query: 'guitar plays man guitar plays', status: 'ok', hash: 'ddd', url: 'fixture://4' },
  ],
};

function fakeFetch(url: string): Promise<Response> {
  if (url.endsWith('/sentences')) {
    return Promise.resolve(new Response(JSON.stringify(SUMMARIES)));
  }
  if (url.endsWith('/sentence/0')) {
    return Promise.resolve(new Response(JSON.stringify(DETAIL)));
  }
  return Promise.resolve(new Response('{"error":"not found"}', { status: 404 }));
}

describe('sentence browser', () => {
  it('query text round-trips byte-for-byte', async () => {
    const flow = new InspectFlow(new ApiClient('', fakeFetch));
    const sentences = await flow.loadSentences();
    expect(sentences[0].queries).toEqual(SUMMARIES[0].queries);
    const detail = await flow.open(0);
    expect(detail.queries).toEqual(SUMMARIES[0].queries);
  });

  it('exposes the fallback badge flag', async () => {
    const flow = new InspectFlow(new ApiClient('', fakeFetch));
    const sentences = await flow.loadSentences();
    expect(sentences[0].fallback).toBe(false);
    expect(sentences[1].fallback).toBe(true);
  });

  it('shows 5 thumbnails in rank order with failed slots as placeholders', async () => {
    const flow = new InspectFlow(new ApiClient('', fakeFetch));
    await flow.open(0);
    expect(flow.thumbnails).toHaveLength(5);
    expect(flow.thumbnails.map((t) => t.rank)).toEqual([0, 1, 2, 3, 4]);
    expect(flow.thumbnails[2].kind).toBe('placeholder');
    expect(flow.thumbnails[2].status).toBe('failed');
    expect(flow.thumbnails[2].src).toBeNull();
    for (const rank of [0, 1, 3, 4]) {
      expect(flow.thumbnails[rank].kind).toBe('image');
      expect(flow.thumbnails[rank].src).toContain('/image/');
    }
  });

  it('placeholder helper never fabricates an image URL', () => {
    const api = new ApiClient('');
    const t = thumbnailFor(api, { m: 0, query: 'q', status: 'failed', hash: null, url: '' });
    expect(t).toEqual({ kind: 'placeholder', rank: 0, status: 'failed', src: null });
  });
});
