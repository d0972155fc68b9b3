// DOM rendering for feedback cards.
//
// Hard invariants enforced here:
//   * Auto items render as plain statements — never as editable controls;
//   * a Manual item with choices renders a <select> whose options equal the
//     prompt's choice list byte-for-byte, plus one disabled placeholder, so
//     no submitted answer can fall outside the documented domain;
//   * the rating control emits only the integers -2..+2;
//   * item order on screen preserves the order the server sent (which is
//     saliency-weight order);
//   * Omitted cards render as a stub that expands on demand.

import type { FeedbackCardJson, FeedbackItemJson } from "./types.js";

export const RATING_VALUES: readonly number[] = [-2, -1, 0, 1, 2];

export interface AnswerInput {
  feature: string;
  answer: string;
}

export interface CardHandlers {
  onExpand(eventId: string): void;
  onSubmit(eventId: string, answers: AnswerInput[], rating: number): void;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function renderAutoItem(item: FeedbackItemJson): HTMLLIElement {
  const li = el("li", "item item-auto");
  li.dataset.mode = item.mode;
  li.dataset.feature = item.feature;
  li.appendChild(el("span", "mode-badge mode-auto", "Auto"));
  li.appendChild(el("p", "statement", item.text));
  if (item.why) li.appendChild(el("p", "why", item.why));
  return li;
}

function renderManualItem(item: FeedbackItemJson): HTMLLIElement {
  const li = el("li", "item item-manual");
  li.dataset.mode = item.mode;
  li.dataset.feature = item.feature;
  li.appendChild(el("span", "mode-badge mode-manual", "Manual"));

  const label = el("label", "prompt", item.prompt ?? item.text);
  const controlId = `answer-${Math.random().toString(36).slice(2)}`;
  label.htmlFor = controlId;
  li.appendChild(label);

  if (item.choices && item.choices.length > 0) {
    const select = el("select", "answer");
    select.id = controlId;
    const placeholder = el("option", undefined, "Select…");
    placeholder.value = "";
    placeholder.disabled = true;
    placeholder.selected = true;
    select.appendChild(placeholder);
    for (const choice of item.choices) {
      const option = el("option", undefined, choice);
      option.value = choice;
      select.appendChild(option);
    }
    li.appendChild(select);
  } else {
    const input = el("input", "answer");
    input.id = controlId;
    input.type = "number";
    input.min = "0";
    input.step = "any";
    input.placeholder = "non-negative number";
    li.appendChild(input);
  }

  if (item.why) li.appendChild(el("p", "why", item.why));
  return li;
}

export function renderRating(): HTMLFieldSetElement {
  const fieldset = el("fieldset", "rating");
  fieldset.appendChild(el("legend", undefined, "How useful was this feedback?"));
  for (const value of RATING_VALUES) {
    const button = el("button", "rating-value", value > 0 ? `+${value}` : `${value}`);
    button.type = "button";
    button.dataset.value = String(value);
    button.setAttribute("aria-pressed", value === 0 ? "true" : "false");
    button.addEventListener("click", () => {
      for (const sibling of fieldset.querySelectorAll("button.rating-value")) {
        sibling.setAttribute("aria-pressed", "false");
      }
      button.setAttribute("aria-pressed", "true");
    });
    fieldset.appendChild(button);
  }
  return fieldset;
}

/** The integer the rating widget currently emits (always one of -2..+2). */
export function selectedRating(scope: HTMLElement): number {
  const pressed = scope.querySelector<HTMLButtonElement>(
    'button.rating-value[aria-pressed="true"]',
  );
  return pressed ? Number.parseInt(pressed.dataset.value ?? "0", 10) : 0;
}

/** Answered Manual controls inside a rendered card, in on-screen order.
 *  Unanswered controls (placeholder still selected, empty input) are skipped. */
export function collectAnswers(cardEl: HTMLElement): AnswerInput[] {
  const answers: AnswerInput[] = [];
  const manualItems = cardEl.querySelectorAll<HTMLElement>('li.item[data-mode="Manual"]');
  for (const item of manualItems) {
    const control = item.querySelector<HTMLSelectElement | HTMLInputElement>(
      "select.answer, input.answer",
    );
    if (!control) continue;
    const value = control.value.trim();
    if (!value) continue;
    answers.push({ feature: item.dataset.feature ?? "", answer: value });
  }
  return answers;
}

export function renderCard(card: FeedbackCardJson, handlers: CardHandlers): HTMLElement {
  const root = el("article", `card card-${card.status.toLowerCase()}`);
  root.dataset.eventId = card.event_id;

  const header = el("header", "card-header");
  header.appendChild(el("h3", "event-id", card.event_id));
  header.appendChild(el("span", `status status-${card.status.toLowerCase()}`, card.status));
  root.appendChild(header);

  if (card.status === "Omitted") {
    root.appendChild(el("p", "stub", card.stub ?? "No salient feedback for this meal"));
    if (card.on_demand_expansion) {
      const expand = el("button", "expand", "Show full card");
      expand.type = "button";
      expand.addEventListener("click", () => handlers.onExpand(card.event_id));
      root.appendChild(expand);
    }
    return root;
  }

  const list = el("ul", "items");
  for (const item of card.items) {
    list.appendChild(item.mode === "Manual" ? renderManualItem(item) : renderAutoItem(item));
  }
  root.appendChild(list);

  if (card.categories.length > 0) {
    root.appendChild(el("p", "categories", card.categories.join(" · ")));
  }

  root.appendChild(renderRating());

  const submit = el("button", "submit", "Submit review");
  submit.type = "button";
  submit.addEventListener("click", () => {
    handlers.onSubmit(card.event_id, collectAnswers(root), selectedRating(root));
  });
  root.appendChild(submit);

  return root;
}

// ----------------------------------------------------------------- banners

export type BannerKind = "error" | "info" | "success";

export function showBanner(
  container: HTMLElement,
  kind: BannerKind,
  message: string,
  retry?: () => void,
): void {
  container.textContent = "";
  const banner = el("div", `banner banner-${kind}`, message);
  banner.setAttribute("role", "alert");
  if (retry) {
    const button = el("button", "retry", "Retry");
    button.type = "button";
    button.addEventListener("click", retry);
    banner.appendChild(button);
  }
  container.appendChild(banner);
}

export function clearBanner(container: HTMLElement): void {
  container.textContent = "";
}
