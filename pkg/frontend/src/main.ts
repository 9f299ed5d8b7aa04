import { ApiClient, formatPercent } from './api';
import { AnnotateFlow, AnnotateState } from './annotate';
import { InspectFlow } from './inspect';

const api = new ApiClient('');
const app = document.getElementById('app')!;

function el(tag: string, cls: string, text?: string): HTMLElement {
  const node = document.createElement(tag);
  node.className = cls;
  if (text !== undefined) node.textContent = text;
  return node;
}

// ---------------------------------------------------------------------
// annotation view
// ---------------------------------------------------------------------

function renderAnnotate(state: AnnotateState) {
  app.textContent = '';
  const stats = state.stats;
  if (stats) {
    const bar = el('div', 'progress',
      `${stats.labeled} / ${stats.total} labeled, noise ${formatPercent(stats.proportion)}`);
    app.appendChild(bar);
  }
  if (state.phase === 'done') {
    const s = state.stats!;
    app.appendChild(el('div', 'done',
      `All ${s.total} items labeled: ${s.noise_count} noise, ` +
      `${s.informative_count} informative (${formatPercent(s.proportion)} noise)`));
    return;
  }
  if (state.phase === 'error') {
    const banner = el('div', 'banner error', `Request failed: ${state.errorMessage}`);
    const retry = el('button', 'retry', 'Retry');
    retry.onclick = () => flow.retry();
    banner.appendChild(retry);
    app.appendChild(banner);
    return;
  }
  if (!state.item) {
    app.appendChild(el('div', 'loading', 'Loading...'));
    return;
  }
  const card = el('div', 'card');
  const img = document.createElement('img');
  img.src = api.imageUrl(state.item.image_url);
  img.alt = state.item.query;
  card.appendChild(img);
  card.appendChild(el('div', 'query', `Query: ${state.item.query}`));
  card.appendChild(el('div', 'source', `Sentence: ${state.item.source}`));
  card.appendChild(el('div', 'hint', 'Press N for noise, I for informative'));
  if (state.phase === 'submitting') card.appendChild(el('div', 'spinner', 'Saving...'));
  app.appendChild(card);
}

// ---------------------------------------------------------------------
// inspection view
// ---------------------------------------------------------------------

async function renderInspect() {
  const inspect = new InspectFlow(api);
  const sentences = await inspect.loadSentences();
  app.textContent = '';
  const list = el('div', 'sentence-list');
  for (const s of sentences) {
    const row = el('div', 'sentence-row', `#${s.sid} ${s.source}`);
    if (s.fallback) row.appendChild(el('span', 'badge fallback', 'fallback'));
    row.onclick = async () => {
      const detail = await inspect.open(s.sid);
      const panel = el('div', 'detail');
      panel.appendChild(el('div', 'ranked', `Ranked: ${detail.ranked.join(', ')}`));
      for (const q of detail.queries) panel.appendChild(el('div', 'q', q));
      const strip = el('div', 'thumbs');
      for (const t of inspect.thumbnails) {
        if (t.kind === 'image') {
          const img = document.createElement('img');
          img.src = t.src!;
          img.className = 'thumb';
          strip.appendChild(img);
        } else {
          strip.appendChild(el('div', 'thumb placeholder', t.status));
        }
      }
      panel.appendChild(strip);
      row.appendChild(panel);
    };
    list.appendChild(row);
  }
  app.appendChild(list);
}

// ---------------------------------------------------------------------
// entry
// ---------------------------------------------------------------------

const flow = new AnnotateFlow(api, 'default', renderAnnotate);

document.addEventListener('keydown', (ev) => {
  if (ev.key.toLowerCase() === 'n' || ev.key.toLowerCase() === 'i') {
    flow.handleKey(ev.key);
  }
});

const mode = new URLSearchParams(window.location.search).get('view');
if (mode === 'inspect') {
  renderInspect();
} else {
  flow.start();
}
