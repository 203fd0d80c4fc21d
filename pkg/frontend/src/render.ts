/**
 * DOM rendering for step view models. Pure construction: every function
 * returns a detached element tree the app mounts. Colors and layout values
 * land in inline styles character-for-character from the view model.
 */

import type { OccurrencePayload } from "./types.js";
import type { GridStepView, StepViewModel } from "./viewmodel.js";

export interface StepHandlers {
  onChoice(value: string): void;
  onToggle(itemId: string): void;
  onGridSubmit(): void;
  onAck(): void;
  onBack(): void;
}

function el<K extends keyof HTMLElementTagNameMap>(
  doc: Document, tag: K, className?: string, text?: string,
): HTMLElementTagNameMap[K] {
  const node = doc.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function itemImage(doc: Document, imageTitle: string, description: string,
                   assetUrl: (title: string) => string): HTMLElement {
  const img = el(doc, "img", "item-image");
  img.src = assetUrl(imageTitle);
  img.alt = description;
  // Missing asset: fall back to the item's description text.
  img.onerror = () => {
    const fallback = el(doc, "div", "item-image item-image-fallback", description);
    img.replaceWith(fallback);
  };
  return img;
}

export function renderStep(doc: Document, view: StepViewModel, handlers: StepHandlers,
                           assetUrl: (title: string) => string): HTMLElement {
  const root = el(doc, "section", `step step-${view.kind}`);
  root.dataset.kind = view.kind;

  if (view.kind === "error") {
    root.appendChild(el(doc, "p", "error-message", view.message));
    return root;
  }

  root.dataset.stepId = view.stepId;
  const header = el(doc, "header");
  header.appendChild(el(doc, "span", "progress", `${view.index + 1} / ${view.total}`));
  if (view.index > 0) {
    const back = el(doc, "button", "back-button", "Back");
    back.dataset.testid = "back";
    back.onclick = () => handlers.onBack();
    header.appendChild(back);
  }
  root.appendChild(header);

  if (view.kind === "choice") {
    root.appendChild(el(doc, "h2", "prompt", view.prompt));
    root.appendChild(itemImage(doc, view.imageTitle, view.description, assetUrl));
    root.appendChild(el(doc, "p", "item-description", view.description));
    const row = el(doc, "div", "choice-row");
    for (const button of view.buttons) {
      const node = el(doc, "button", "choice-button", button.label);
      node.dataset.value = button.value;
      node.dataset.color = button.color;  // verbatim payload color
      node.style.backgroundColor = button.color;
      node.onclick = () => handlers.onChoice(button.value);
      row.appendChild(node);
    }
    root.appendChild(row);
    return root;
  }

  if (view.kind === "grid") {
    root.appendChild(el(doc, "h2", "prompt", view.prompt));
    root.appendChild(renderGrid(doc, view, handlers, assetUrl));
    const submit = el(doc, "button", "grid-submit", "Submit");
    submit.dataset.testid = "grid-submit";
    submit.dataset.color = view.submitButtonColor;  // verbatim payload color
    submit.style.backgroundColor = view.submitButtonColor;
    submit.onclick = () => handlers.onGridSubmit();
    root.appendChild(submit);
    return root;
  }

  // summary
  root.appendChild(el(doc, "h2", "summary-title", view.title));
  root.appendChild(el(doc, "p", "summary-text", view.text));
  const done = el(doc, "button", "ack-button", "Done");
  done.dataset.testid = "ack";
  done.onclick = () => handlers.onAck();
  root.appendChild(done);
  return root;
}

function renderGrid(doc: Document, view: GridStepView, handlers: StepHandlers,
                    assetUrl: (title: string) => string): HTMLElement {
  const grid = el(doc, "div", "item-grid");
  grid.style.backgroundColor = view.config.backgroundColor;
  for (const cells of view.rows) {
    const row = el(doc, "div", "grid-row");
    row.style.gap = `${view.config.itemMinSpacing}px`;
    for (const cell of cells) {
      const node = el(doc, "button", "grid-cell");
      node.dataset.itemId = cell.itemId;
      node.dataset.selected = String(cell.selected);
      if (cell.selected) {
        node.style.backgroundColor = view.config.selectedCellColor;
        if (view.config.overlayImageTitle) {
          const overlay = el(doc, "img", "cell-overlay");
          overlay.src = assetUrl(view.config.overlayImageTitle);
          overlay.alt = "";
          node.appendChild(overlay);
        }
      }
      node.appendChild(itemImage(doc, cell.imageTitle, cell.description, assetUrl));
      node.appendChild(el(doc, "span", "cell-label", cell.description));
      node.onclick = () => handlers.onToggle(cell.itemId);
      row.appendChild(node);
    }
    grid.appendChild(row);
  }
  return grid;
}

export function renderDueList(doc: Document, occurrences: OccurrencePayload[],
                              onStart: (occ: OccurrencePayload) => void,
                              onSnooze: (occ: OccurrencePayload) => void): HTMLElement {
  const root = el(doc, "section", "due-list");
  if (occurrences.length === 0) {
    root.appendChild(el(doc, "p", "due-empty", "No surveys due right now."));
    return root;
  }
  for (const occ of occurrences) {
    const card = el(doc, "div", "due-card");
    card.dataset.kind = occ.taskRef.kind;
    card.dataset.occurrenceId = occ.occurrenceId;
    card.appendChild(el(doc, "h3", "due-title",
      `${occ.taskRef.kind === "full" ? "Full assessment" : occ.taskRef.kind === "spot" ? "Daily check-in" : "Mood check-in"}`));
    card.appendChild(el(doc, "p", "due-at", `Due ${occ.dueAt}`));
    const start = el(doc, "button", "start-button", "Start");
    start.dataset.testid = "start";
    start.onclick = () => onStart(occ);
    card.appendChild(start);
    const snooze = el(doc, "button", "snooze-button", "Snooze");
    snooze.dataset.testid = "snooze";
    snooze.onclick = () => onSnooze(occ);
    card.appendChild(snooze);
    root.appendChild(card);
  }
  return root;
}

export function renderNotice(doc: Document, text: string, className = "notice"): HTMLElement {
  return el(doc, "p", className, text);
}
