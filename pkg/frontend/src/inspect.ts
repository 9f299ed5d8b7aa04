/**
 * Read-only sentence browser: ranked terms, the synthesized queries, and the
 * retrieved thumbnails with their statuses. Failed slots render as
 * placeholders rather than broken images.
 */

import { ApiClient, ImageSlot, SentenceDetail, SentenceSummary } from './api';

export interface Thumbnail {
  kind: 'image' | 'placeholder';
  rank: number;
  status: string;
  src: string | null;
}

export function thumbnailFor(api: ApiClient, slot: ImageSlot): Thumbnail {
  if (slot.status === 'ok' && slot.hash) {
    return { kind: 'image', rank: slot.m, status: slot.status,
             src: api.imageUrl(`/image/${slot.hash}`) };
  }
  return { kind: 'placeholder', rank: slot.m, status: slot.status, src: null };
}

export class InspectFlow {
  sentences: SentenceSummary[] = [];
  detail: SentenceDetail | null = null;
  thumbnails: Thumbnail[] = [];

  constructor(private api: ApiClient) {}

  async loadSentences(): Promise<SentenceSummary[]> {
    this.sentences = await this.api.sentences();
    return this.sentences;
  }

  async open(sid: number): Promise<SentenceDetail> {
    this.detail = await this.api.sentence(sid);
    this.thumbnails = this.detail.images.map((slot) => thumbnailFor(this.api, slot));
    return this.detail;
  }
}
