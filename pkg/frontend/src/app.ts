// Application wiring: one page, one queue, one API client.
//
// Submissions are optimistic: answers go into the durable outbox first, the
// card's controls lock immediately, and the outbox drains in the background.
// Failures surface as banners with a retry action — never silently.

import { ApiClient, ApiError } from "./api.js";
import { SubmissionQueue } from "./queue.js";
import type { DrainResult } from "./queue.js";
import {
  clearBanner,
  renderCard,
  showBanner,
} from "./view.js";
import type { AnswerInput, CardHandlers } from "./view.js";
import type { FeedbackCardJson } from "./types.js";

export interface AppOptions {
  /** API origin; empty string when served from the same origin (/ui). */
  base?: string;
  /** Storage backing the outbox; defaults to window.localStorage. */
  storage?: Storage;
}

export interface App {
  client: ApiClient;
  queue: SubmissionQueue;
  load(userId: string, week?: string): Promise<void>;
  flush(): Promise<DrainResult>;
}

export function initApp(root: HTMLElement, options: AppOptions = {}): App {
  const client = new ApiClient(options.base ?? "");
  const storage = options.storage ?? window.localStorage;
  const queue = new SubmissionQueue(storage, (entry) => client.postElicitation(entry));

  const bannerHost = root.querySelector<HTMLElement>("#banner");
  const cardsHost = root.querySelector<HTMLElement>("#cards");
  const badge = root.querySelector<HTMLElement>("#queue-badge");
  const weekLabel = root.querySelector<HTMLElement>("#week-label");
  const form = root.querySelector<HTMLFormElement>("#load-form");
  if (!bannerHost || !cardsHost) {
    throw new Error("page shell is missing #banner or #cards");
  }

  let currentUser: string | null = null;

  function updateBadge(): void {
    if (!badge) return;
    const pending = queue.size;
    badge.textContent = pending > 0 ? `${pending} pending` : "";
  }

  async function flush(): Promise<DrainResult> {
    const result = await queue.drain();
    updateBadge();
    if (result.interrupted) {
      const pending = queue.size;
      showBanner(
        bannerHost!,
        "info",
        `Offline? ${pending} answer${pending === 1 ? "" : "s"} saved locally — will retry.`,
        () => void flush(),
      );
    } else if (result.rejected.length > 0) {
      const first = result.rejected[0]!;
      showBanner(
        bannerHost!,
        "error",
        `Server rejected ${result.rejected.length} submission${
          result.rejected.length === 1 ? "" : "s"
        } (HTTP ${first.status}): ${first.detail}`,
      );
    } else if (result.delivered.length > 0) {
      showBanner(
        bannerHost!,
        "success",
        `Synced ${result.delivered.length} answer${result.delivered.length === 1 ? "" : "s"}.`,
      );
    }
    return result;
  }

  const handlers: CardHandlers = {
    onExpand(eventId: string): void {
      void (async () => {
        try {
          const full = await client.getCard(eventId, true);
          replaceCard(eventId, full);
          clearBanner(bannerHost!);
        } catch (err) {
          reportError(err);
        }
      })();
    },
    onSubmit(eventId: string, answers: AnswerInput[], rating: number): void {
      if (!currentUser) {
        showBanner(bannerHost!, "error", "Load a user's week before submitting.");
        return;
      }
      if (answers.length === 0) {
        showBanner(bannerHost!, "info", "Pick an answer before submitting.");
        return;
      }
      for (const answer of answers) {
        queue.enqueue({
          event_id: eventId,
          user_id: currentUser,
          feature: answer.feature,
          answer: answer.answer,
          rating,
        });
      }
      lockCard(eventId);
      updateBadge();
      void flush();
    },
  };

  function replaceCard(eventId: string, card: FeedbackCardJson): void {
    const existing = cardsHost!.querySelector<HTMLElement>(
      `article.card[data-event-id="${CSS.escape(eventId)}"]`,
    );
    const fresh = renderCard(card, handlers);
    if (existing) existing.replaceWith(fresh);
    else cardsHost!.appendChild(fresh);
  }

  function lockCard(eventId: string): void {
    const cardEl = cardsHost!.querySelector<HTMLElement>(
      `article.card[data-event-id="${CSS.escape(eventId)}"]`,
    );
    if (!cardEl) return;
    for (const control of cardEl.querySelectorAll<
      HTMLSelectElement | HTMLInputElement | HTMLButtonElement
    >("select.answer, input.answer, button.submit")) {
      control.disabled = true;
    }
    cardEl.classList.add("card-submitted");
  }

  function reportError(err: unknown): void {
    if (err instanceof ApiError) {
      const hint =
        err.status === 409
          ? " — train a model first (POST /v1/train)."
          : err.status === 404
            ? " — check the user id / event id."
            : "";
      showBanner(bannerHost!, "error", `${err.detail}${hint}`);
    } else {
      showBanner(bannerHost!, "error", `Network problem: ${String(err)}`, () => void flush());
    }
  }

  async function load(userId: string, week?: string): Promise<void> {
    clearBanner(bannerHost!);
    try {
      const doc = await client.getFeedback(userId, week);
      currentUser = doc.user_id;
      if (weekLabel) weekLabel.textContent = `${doc.user_id} · ${doc.week}`;
      cardsHost!.textContent = "";
      for (const card of doc.cards) {
        cardsHost!.appendChild(renderCard(card, handlers));
      }
      if (doc.cards.length === 0) {
        showBanner(bannerHost!, "info", "No meals recorded in this week.");
      }
    } catch (err) {
      reportError(err);
    }
  }

  if (form) {
    form.addEventListener("submit", (event) => {
      event.preventDefault();
      const user = form.querySelector<HTMLInputElement>("#user-input")?.value.trim();
      const week = form.querySelector<HTMLInputElement>("#week-input")?.value.trim();
      if (user) void load(user, week || undefined);
    });
  }

  // Anything left over from a previous visit syncs as soon as the app starts.
  updateBadge();
  if (queue.size > 0) void flush();

  return { client, queue, load, flush };
}
