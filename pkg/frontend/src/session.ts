import { ApiClient, ApiError } from "./api.js";
import type { AnnotationRecord, FitPayload, Vec2 } from "./types.js";

export type SessionStatus = "in-progress" | "accepted";

export interface SessionSnapshot {
  frameId: string;
  labels: Record<string, Vec2>;
  fit: FitPayload | null;
  warning: string | null;
  status: SessionStatus;
  fitPending: boolean;
  connectionError: string | null;
  accepted: AnnotationRecord | null;
}

/**
 * One frame's annotation session. Labels are applied optimistically and
 * fit requests are serialized latest-wins: stale responses never
 * overwrite a newer label set's fit. Every displayed fit comes from the
 * server; there is no client-side kinematics. On a connection error the
 * pending labels are kept and the session enters a retry state.
 */
export class AnnotationSession {
  private labels: Record<string, Vec2> = {};
  private fit: FitPayload | null = null;
  private warning: string | null = null;
  private status: SessionStatus = "in-progress";
  private fitPending = false;
  private connectionError: string | null = null;
  private accepted: AnnotationRecord | null = null;
  private fitSeq = 0;
  private listeners: Array<(s: SessionSnapshot) => void> = [];

  constructor(
    readonly api: ApiClient,
    readonly frameId: string,
    readonly annotator: string,
  ) {}

  snapshot(): SessionSnapshot {
    return {
      frameId: this.frameId,
      labels: { ...this.labels },
      fit: this.fit,
      warning: this.warning,
      status: this.status,
      fitPending: this.fitPending,
      connectionError: this.connectionError,
      accepted: this.accepted,
    };
  }

  onChange(listener: (s: SessionSnapshot) => void): void {
    this.listeners.push(listener);
  }

  private notify(): void {
    const snap = this.snapshot();
    for (const listener of this.listeners) listener(snap);
  }

  labelCount(): number {
    return Object.keys(this.labels).length;
  }

  /** Place (or move) a label and request a refit. */
  async placeLabel(joint: string, position: Vec2): Promise<void> {
    this.labels[joint] = position;
    this.status = "in-progress";
    this.notify();
    await this.requestFit();
  }

  async removeLabel(joint: string): Promise<void> {
    delete this.labels[joint];
    this.notify();
    if (this.labelCount() > 0) await this.requestFit();
    else {
      this.fit = null;
      this.warning = "under_constrained";
      this.notify();
    }
  }

  /** Re-issue the last fit after a connection failure. */
  async retryFit(): Promise<void> {
    await this.requestFit();
  }

  private async requestFit(): Promise<void> {
    const seq = ++this.fitSeq;
    this.fitPending = true;
    this.notify();
    try {
      const response = await this.api.fit(this.frameId, this.labels, this.annotator);
      if (seq < this.fitSeq) return; // a newer label set superseded this fit
      this.fit = response.fit;
      this.warning = response.warning;
      this.connectionError = null;
    } catch (err) {
      if (seq < this.fitSeq) return;
      this.connectionError = err instanceof ApiError ? err.message : String(err);
    } finally {
      if (seq === this.fitSeq) {
        this.fitPending = false;
        this.notify();
      }
    }
  }

  canAccept(): boolean {
    return this.fit !== null && this.labelCount() > 0 && !this.fitPending;
  }

  /**
   * Persist the fitted annotation. Accepting twice is idempotent (the
   * server keeps one annotation per frame and annotator).
   */
  async acceptFrame(occluded: string[] = []): Promise<AnnotationRecord> {
    if (this.labelCount() === 0) {
      throw new ApiError("cannot accept: no labels placed");
    }
    if (this.fit === null) {
      throw new ApiError("cannot accept: no fit yet");
    }
    const response = await this.api.accept(
      this.frameId, this.labels, this.annotator, occluded,
    );
    this.accepted = response.annotation;
    this.status = "accepted";
    this.connectionError = null;
    this.notify();
    return response.annotation;
  }
}
