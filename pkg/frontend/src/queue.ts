// Durable outbox for review submissions.
//
// Invariants the rest of the app relies on:
//   * every entry gets a client-generated submission_id at enqueue time and
//     keeps it across retries, so the server can deduplicate replays;
//   * entries live in Storage, so nothing entered is lost on reload or when
//     the network drops mid-submit;
//   * draining posts strictly one entry at a time in enqueue order and stops
//     at the first network failure, leaving the remainder queued for later;
//   * concurrent drain() calls are chained, never interleaved;
//   * entries the server permanently rejects (4xx) are removed but reported,
//     never dropped silently.

import { ApiError } from "./api.js";
import type { ElicitationAck, ElicitationRequest } from "./types.js";

const STORAGE_KEY = "review-ui/outbox/v1";

export interface SubmissionInput {
  event_id: string;
  user_id: string;
  feature: string;
  answer: string;
  rating: number;
}

export interface RejectedSubmission {
  entry: ElicitationRequest;
  status: number;
  detail: string;
}

export interface DrainResult {
  /** Acknowledged by the server (created or idempotent replay). */
  delivered: ElicitationAck[];
  /** Permanently rejected by the server; removed from the queue. */
  rejected: RejectedSubmission[];
  /** True when a network failure interrupted the drain; the remaining
   *  entries are still queued. */
  interrupted: boolean;
}

function newSubmissionId(): string {
  const c = globalThis.crypto;
  if (c && typeof c.randomUUID === "function") return c.randomUUID();
  return Math.random().toString(36).slice(2) + "-" + Date.now().toString(36);
}

export class SubmissionQueue {
  private tail: Promise<unknown> = Promise.resolve();

  constructor(
    private readonly storage: Storage,
    private readonly post: (entry: ElicitationRequest) => Promise<ElicitationAck>,
  ) {}

  load(): ElicitationRequest[] {
    const raw = this.storage.getItem(STORAGE_KEY);
    if (!raw) return [];
    try {
      const parsed = JSON.parse(raw) as unknown;
      return Array.isArray(parsed) ? (parsed as ElicitationRequest[]) : [];
    } catch {
      return [];
    }
  }

  private save(entries: ElicitationRequest[]): void {
    this.storage.setItem(STORAGE_KEY, JSON.stringify(entries));
  }

  get size(): number {
    return this.load().length;
  }

  enqueue(input: SubmissionInput): ElicitationRequest {
    if (!Number.isInteger(input.rating) || input.rating < -2 || input.rating > 2) {
      throw new RangeError(`rating must be an integer in [-2, 2], got ${input.rating}`);
    }
    if (!input.answer) {
      throw new RangeError("answer must be non-empty");
    }
    const entry: ElicitationRequest = { ...input, submission_id: newSubmissionId() };
    const entries = this.load();
    entries.push(entry);
    this.save(entries);
    return entry;
  }

  /** Post queued entries one at a time; safe to call repeatedly. */
  drain(): Promise<DrainResult> {
    const run = this.tail.then(() => this.drainNow());
    this.tail = run.catch(() => undefined);
    return run;
  }

  private remove(submissionId: string): void {
    this.save(this.load().filter((e) => e.submission_id !== submissionId));
  }

  private async drainNow(): Promise<DrainResult> {
    const result: DrainResult = { delivered: [], rejected: [], interrupted: false };
    for (;;) {
      const entries = this.load();
      const entry = entries[0];
      if (entry === undefined) return result;
      try {
        const ack = await this.post(entry);
        result.delivered.push(ack);
      } catch (err) {
        if (err instanceof ApiError && err.status >= 400 && err.status < 500) {
          result.rejected.push({ entry, status: err.status, detail: err.detail });
        } else {
          // Network failure or server fault: keep everything, retry later.
          result.interrupted = true;
          return result;
        }
      }
      this.remove(entry.submission_id);
    }
  }
}
