/**
 * Typed client for the annotation service endpoints. All state lives on the
 * server; this module only moves JSON back and forth.
 */

export type Label = 'noise' | 'informative';

export interface Stats {
  labeled: number;
  remaining: number;
  total: number;
  noise_count: number;
  informative_count: number;
  proportion: number;
}

export interface AnnotationItem {
  key: string;
  sid: number;
  m: number;
  query: string;
  hash: string;
  image_url: string;
  source: string;
}

export interface NextResponse {
  done: boolean;
  item?: AnnotationItem;
  stats: Stats;
}

export interface LabelResponse {
  ok: boolean;
  stats: Stats;
}

export interface SentenceSummary {
  sid: number;
  source: string;
  ranked: string[];
  queries: string[];
  fallback: boolean;
}

export interface ImageSlot {
  m: number;
  query: string;
  status: string;
  hash: string | null;
  url: string;
}

export interface SentenceDetail extends SentenceSummary {
  images: ImageSlot[];
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

export class ApiClient {
  constructor(
    private baseUrl: string = '',
    private fetchFn: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async getJson<T>(path: string): Promise<T> {
    const resp = await this.fetchFn(this.baseUrl + path);
    if (!resp.ok) {
      throw new ApiError(resp.status, `GET ${path} failed with ${resp.status}`);
    }
    return resp.json() as Promise<T>;
  }

  next(sessionId: string): Promise<NextResponse> {
    return this.getJson(`/session/${sessionId}/next`);
  }

  stats(sessionId: string): Promise<Stats> {
    return this.getJson(`/session/${sessionId}/stats`);
  }

  async label(sessionId: string, itemKey: string, label: Label): Promise<LabelResponse> {
    const resp = await this.fetchFn(`${this.baseUrl}/session/${sessionId}/label`, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify({ item: itemKey, label }),
    });
    if (!resp.ok) {
      throw new ApiError(resp.status, `label ${itemKey} failed with ${resp.status}`);
    }
    return resp.json() as Promise<LabelResponse>;
  }

  sentences(): Promise<SentenceSummary[]> {
    return this.getJson('/sentences');
  }

  sentence(sid: number): Promise<SentenceDetail> {
    return this.getJson(`/sentence/${sid}`);
  }

  imageUrl(path: string): string {
    return this.baseUrl + path;
  }
}

/** Render a server-reported proportion; never recomputed client-side. */
export function formatPercent(proportion: number): string {
  return `${(proportion * 100).toFixed(1)}%`;
}
