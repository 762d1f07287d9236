/** Player core: server-authoritative session state, no sequencing logic.
 *
 * Every decision round-trips to the service; the player only mirrors the
 * returned view. One request is in flight per session at a time, and
 * action requests arriving while busy are dropped so a double-click
 * advances exactly once. A 409 refreshes the view (the offered actions
 * were stale); a network failure keeps the view and arms a retry.
 */

import { ApiError, ExternalAction, SessionApi, SessionView } from './api.js';

export interface PlayerViewModel {
  sessionId: string | null;
  status: 'idle' | 'active' | 'completed';
  breadcrumbs: string[];
  unit: { id: string; kind: string; payloadRef: string } | null;
  position: string;
  actions: ExternalAction[];
  attempts: number;
  banner: string | null;
  canRetry: boolean;
}

export type Listener = (vm: PlayerViewModel) => void;

const IDLE: PlayerViewModel = {
  sessionId: null,
  status: 'idle',
  breadcrumbs: [],
  unit: null,
  position: 'entry',
  actions: [],
  attempts: 0,
  banner: null,
  canRetry: false,
};

function toViewModel(view: SessionView): PlayerViewModel {
  const actions = view.available_events.filter(
    (e): e is ExternalAction => e === 'next' || e === 'back' || e === 'submit',
  );
  return {
    sessionId: view.session_id,
    status: view.status === 'completed' ? 'completed' : 'active',
    breadcrumbs: view.breadcrumbs.slice(),
    unit: view.current_unit
      ? { id: view.current_unit.id, kind: view.current_unit.kind, payloadRef: view.current_unit.payload_ref }
      : null,
    position: view.position,
    actions,
    attempts: view.attempts,
    banner: null,
    canRetry: false,
  };
}

export class Player {
  private vm: PlayerViewModel = IDLE;
  private listeners: Listener[] = [];
  private busy = false;
  private retryAction: (() => Promise<void>) | null = null;

  constructor(private readonly api: SessionApi) {}

  get view(): PlayerViewModel {
    return this.vm;
  }

  onChange(listener: Listener): void {
    this.listeners.push(listener);
  }

  private emit(vm: PlayerViewModel): void {
    this.vm = vm;
    for (const listener of this.listeners) listener(vm);
  }

  /** Start a session; on failure shows a banner and creates nothing. */
  async startCourse(courseId: string): Promise<void> {
    if (this.busy) return;
    this.busy = true;
    try {
      const view = await this.api.createSession(courseId);
      this.emit(toViewModel(view));
    } catch (err) {
      this.emit({ ...this.vm, banner: describe(err), canRetry: false });
    } finally {
      this.busy = false;
    }
  }

  /** Post one learner action. Dropped while another request is in flight. */
  async act(action: ExternalAction, score?: number): Promise<void> {
    if (this.busy || this.vm.sessionId === null) return;
    const sessionId = this.vm.sessionId;
    const run = async () => {
      try {
        const view = await this.api.postEvent(sessionId, action, score);
        this.retryAction = null;
        this.emit(toViewModel(view));
      } catch (err) {
        if (err instanceof ApiError && err.status === 409) {
          // stale actions: refresh what the server currently offers
          const fresh = await this.api.getSession(sessionId);
          this.retryAction = null;
          this.emit({ ...toViewModel(fresh), banner: err.message });
        } else if (err instanceof ApiError) {
          this.retryAction = null;
          this.emit({ ...this.vm, banner: err.message, canRetry: false });
        } else {
          // network trouble: keep the view, offer a retry
          this.retryAction = run;
          this.emit({ ...this.vm, banner: describe(err), canRetry: true });
        }
      }
    };
    this.busy = true;
    try {
      await run();
    } finally {
      this.busy = false;
    }
  }

  /** Re-issue the action that failed on the network. */
  async retry(): Promise<void> {
    const pending = this.retryAction;
    if (!pending || this.busy) return;
    this.busy = true;
    try {
      await pending();
    } finally {
      this.busy = false;
    }
  }

  dismissBanner(): void {
    if (this.vm.banner !== null && !this.vm.canRetry) {
      this.emit({ ...this.vm, banner: null });
    }
  }
}

function describe(err: unknown): string {
  if (err instanceof Error) return err.message;
  return String(err);
}
