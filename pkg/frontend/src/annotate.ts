/**
 * Annotation flow state machine: fetch next -> render -> capture label ->
 * POST -> refresh stats. One in-flight request at a time; a network failure
 * parks the pending label behind a retry banner instead of dropping it.
 */

import { AnnotationItem, ApiClient, Label, Stats } from './api';

export type Phase = 'loading' | 'ready' | 'submitting' | 'error' | 'done';

export interface AnnotateState {
  phase: Phase;
  item: AnnotationItem | null;
  stats: Stats | null;
  pendingLabel: Label | null;
  errorMessage: string | null;
}

export const KEY_BINDINGS: Record<string, Label> = {
  n: 'noise',
  i: 'informative',
};

export class AnnotateFlow {
  state: AnnotateState = {
    phase: 'loading',
    item: null,
    stats: null,
    pendingLabel: null,
    errorMessage: null,
  };

  constructor(
    private api: ApiClient,
    private sessionId: string = 'default',
    private onChange: (s: AnnotateState) => void = () => {},
  ) {}

  private set(patch: Partial<AnnotateState>) {
    this.state = { ...this.state, ...patch };
    this.onChange(this.state);
  }

  async start(): Promise<void> {
    this.set({ phase: 'loading' });
    await this.advance();
  }

  private async advance(): Promise<void> {
    try {
      const resp = await this.api.next(this.sessionId);
      if (resp.done) {
        this.set({ phase: 'done', item: null, stats: resp.stats, pendingLabel: null });
      } else {
        this.set({
          phase: 'ready', item: resp.item ?? null, stats: resp.stats,
          pendingLabel: null, errorMessage: null,
        });
      }
    } catch (err) {
      this.set({ phase: 'error', errorMessage: String(err) });
    }
  }

  /** Map a keypress to a label; unknown keys are ignored. */
  handleKey(key: string): Promise<void> | null {
    const label = KEY_BINDINGS[key.toLowerCase()];
    if (!label) return null;
    return this.submit(label);
  }

  async submit(label: Label): Promise<void> {
    if (this.state.phase !== 'ready' || !this.state.item) return;
    await this.post(label);
  }

  /** Resubmit the label that failed; only valid in the error phase. */
  async retry(): Promise<void> {
    if (this.state.phase !== 'error') return;
    if (this.state.pendingLabel && this.state.item) {
      await this.post(this.state.pendingLabel);
    } else {
      await this.advance();
    }
  }

  private async post(label: Label): Promise<void> {
    const item = this.state.item!;
    this.set({ phase: 'submitting', pendingLabel: label });
    try {
      const resp = await this.api.label(this.sessionId, item.key, label);
      // stats come straight from the acknowledgment, never recomputed here
      this.set({ stats: resp.stats, pendingLabel: null });
      await this.advance();
    } catch (err) {
      this.set({ phase: 'error', errorMessage: String(err) });
    }
  }
}
