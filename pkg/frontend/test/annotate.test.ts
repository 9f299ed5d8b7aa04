import { describe, expect, it } from 'vitest';

import { ApiClient, formatPercent } from '../src/api';
import { AnnotateFlow } from '../src/annotate';
import { FakeService, Store, makeItems } from './fake_service';

function setup(n = 10) {
  const store: Store = { labels: new Map() };
  const service = new FakeService(store, makeItems(n));
  const api = new ApiClient('', service.fetch);
  const flow = new AnnotateFlow(api);
  return { store, service, api, flow };
}

describe('keyboard labeling', () => {
  it('maps N to noise and I to informative', async () => {
    const { store, flow } = setup(2);
    await flow.start();
    const first = flow.state.item!.key;
    await flow.handleKey('N');
    expect(store.labels.get(first)).toBe('noise');
    const second = flow.state.item!.key;
    await flow.handleKey('i');
    expect(store.labels.get(second)).toBe('informative');
    expect(flow.state.phase).toBe('done');
  });

  it('ignores unbound keys', async () => {
    const { store, flow } = setup(2);
    await flow.start();
    expect(flow.handleKey('x')).toBeNull();
    expect(flow.handleKey('Enter')).toBeNull();
    expect(store.labels.size).toBe(0);
    expect(flow.state.phase).toBe('ready');
  });
});

describe('progress and stats', () => {
  it('labeling 10 items advances progress 0 to 10', async () => {
    const { flow } = setup(10);
    await flow.start();
    expect(flow.state.stats!.labeled).toBe(0);
    const seen: number[] = [];
    while (flow.state.phase === 'ready') {
      await flow.submit('informative');
      seen.push(flow.state.stats!.labeled);
    }
    expect(seen).toEqual([1, 2, 3, 4, 5, 6, 7, 8, 9, 10]);
    expect(flow.state.phase).toBe('done');
  });

  it('displays exactly the server-reported proportion', () => {
    expect(formatPercent(61 / 1000)).toBe('6.1%');
    expect(formatPercent(228 / 1000)).toBe('22.8%');
    expect(formatPercent(685 / 1000)).toBe('68.5%');
    expect(formatPercent(0)).toBe('0.0%');
  });

  it('never computes stats client-side: state.stats is the last response', async () => {
    const { service, flow } = setup(3);
    await flow.start();
    await flow.submit('noise');
    // whatever the server says is what the client holds
    const serverStats = JSON.parse(
      await (await service.fetch('/session/default/stats')).text());
    expect(flow.state.stats).toEqual(serverStats);
  });
});

describe('request discipline', () => {
  it('allows only one in-flight label request', async () => {
    const { service, flow } = setup(4);
    const api = new ApiClient('', async (url, init) => {
      if (url.endsWith('/label')) {
        await new Promise((r) => setTimeout(r, 10));
      }
      return service.fetch(url, init);
    });
    const slow = new AnnotateFlow(api);
    await slow.start();
    const p1 = slow.submit('noise');
    const p2 = slow.submit('informative'); // submitting phase: dropped
    await Promise.all([p1, p2]);
    expect(slow.state.stats!.labeled).toBe(1);
    expect(slow.state.stats!.noise_count).toBe(1);
  });

  it('network failure shows a retry banner and drops nothing', async () => {
    const { store, service, flow } = setup(3);
    await flow.start();
    const key = flow.state.item!.key;
    service.failNextLabel = true;
    await flow.submit('noise');
    expect(flow.state.phase).toBe('error');
    expect(flow.state.errorMessage).toContain('fetch failed');
    expect(store.labels.size).toBe(0);
    expect(flow.state.pendingLabel).toBe('noise');

    await flow.retry();
    expect(store.labels.get(key)).toBe('noise');
    expect(flow.state.phase).toBe('ready');
    expect(flow.state.stats!.labeled).toBe(1);
  });

  it('retry outside the error phase is a no-op', async () => {
    const { store, flow } = setup(2);
    await flow.start();
    await flow.retry();
    expect(store.labels.size).toBe(0);
    expect(flow.state.phase).toBe('ready');
  });
});

describe('session round trip', () => {
  it('labels a 20-item session end to end; restart loses no acknowledged label', async () => {
    const store: Store = { labels: new Map() };
    const items = makeItems(20);
    let service = new FakeService(store, items);
    let flow = new AnnotateFlow(new ApiClient('', service.fetch));
    await flow.start();

    const given = new Map<string, 'noise' | 'informative'>();
    for (let i = 0; i < 12; i++) {
      const key = flow.state.item!.key;
      const label = i % 3 === 0 ? 'noise' : 'informative';
      await flow.submit(label);
      given.set(key, label);
    }

    // kill the service; the durable store survives, in-memory service state
    // does not
    service = new FakeService(store, items);
    flow = new AnnotateFlow(new ApiClient('', service.fetch));
    await flow.start();
    expect(flow.state.stats!.labeled).toBe(12);
    expect(flow.state.item!.key).toBe(items[12].key); // first unlabeled

    while (flow.state.phase === 'ready') {
      const key = flow.state.item!.key;
      const label = given.size % 3 === 0 ? 'noise' : 'informative';
      await flow.submit(label);
      given.set(key, label);
    }
    expect(flow.state.phase).toBe('done');

    // server stats equal the labels the client handed over
    const stats = flow.state.stats!;
    expect(stats.labeled).toBe(20);
    expect(stats.total).toBe(20);
    let noise = 0;
    for (const [key, label] of given) {
      expect(store.labels.get(key)).toBe(label);
      if (label === 'noise') noise++;
    }
    expect(stats.noise_count).toBe(noise);
    expect(stats.informative_count).toBe(20 - noise);
    expect(stats.proportion).toBe(noise / 20);
  });
});
