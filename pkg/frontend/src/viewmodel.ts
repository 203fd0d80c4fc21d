/**
 * Pure view models for survey steps.
 *
 * Everything here is derived from the API step payload alone and is
 * side-effect free, so layout and selection logic stays unit-testable
 * without a browser. Presentation values (colors, per-row counts, spacing)
 * are copied verbatim from the payload, never reinterpreted.
 */

import type { GridOptionsPayload, StepPayload } from "./types.js";

export interface ChoiceButton {
  label: string;
  value: string;
  color: string;
}

export interface GridCell {
  itemId: string;
  description: string;
  imageTitle: string;
  selected: boolean;
}

export interface GridConfig {
  itemsPerRow: number;
  itemMinSpacing: number;
  backgroundColor: string;
  selectedCellColor: string;
  overlayImageTitle: string | null;
  somethingSelectedButtonColor: string;
  nothingSelectedButtonColor: string;
}

export interface ChoiceStepView {
  kind: "choice";
  stepId: string;
  index: number;
  total: number;
  prompt: string;
  imageTitle: string;
  description: string;
  buttons: ChoiceButton[];
}

export interface GridStepView {
  kind: "grid";
  stepId: string;
  index: number;
  total: number;
  prompt: string;
  selectMode: "multi" | "single";
  cells: GridCell[];
  rows: GridCell[][];
  config: GridConfig;
  selection: string[];
  submitButtonColor: string;
}

export interface SummaryStepView {
  kind: "summary";
  stepId: string;
  index: number;
  total: number;
  title: string;
  text: string;
}

export interface ErrorStepView {
  kind: "error";
  message: string;
}

export type StepViewModel = ChoiceStepView | GridStepView | SummaryStepView | ErrorStepView;

/** Fallback layout for grids whose payload carries no options (mood grids). */
const DEFAULT_GRID_CONFIG: GridConfig = {
  itemsPerRow: 4,
  itemMinSpacing: 8.0,
  backgroundColor: "#FFFFFF",
  selectedCellColor: "#DDDDDD",
  overlayImageTitle: null,
  somethingSelectedButtonColor: "#4A90D9",
  nothingSelectedButtonColor: "#9B9B9B",
};

function gridConfig(options: GridOptionsPayload | null): GridConfig {
  if (options === null) {
    return { ...DEFAULT_GRID_CONFIG };
  }
  return {
    itemsPerRow: options.itemsPerRow,
    itemMinSpacing: options.itemMinSpacing,
    backgroundColor: options.itemCollectionViewBackgroundColor,
    selectedCellColor: options.itemCellSelectedColor,
    overlayImageTitle: options.itemCellSelectedOverlayImageTitle,
    somethingSelectedButtonColor: options.somethingSelectedButtonColor,
    nothingSelectedButtonColor: options.nothingSelectedButtonColor,
  };
}

export function chunkRows<T>(cells: T[], perRow: number): T[][] {
  const width = Math.max(1, perRow);
  const rows: T[][] = [];
  for (let i = 0; i < cells.length; i += width) {
    rows.push(cells.slice(i, i + width));
  }
  return rows;
}

export function rowCount(itemCount: number, perRow: number): number {
  return Math.ceil(itemCount / Math.max(1, perRow));
}

export function buildStepView(payload: StepPayload): StepViewModel {
  switch (payload.kind) {
    case "single_choice_image":
      return {
        kind: "choice",
        stepId: payload.stepId,
        index: payload.index,
        total: payload.total,
        prompt: payload.prompt,
        imageTitle: payload.item.imageTitle,
        description: payload.item.description,
        buttons: payload.choices.map((c) => ({ label: c.text, value: c.value, color: c.color })),
      };
    case "image_grid": {
      const config = gridConfig(payload.options);
      const cells = payload.items.map((item) => ({
        itemId: item.identifier,
        description: item.description,
        imageTitle: item.imageTitle,
        selected: false,
      }));
      return {
        kind: "grid",
        stepId: payload.stepId,
        index: payload.index,
        total: payload.total,
        prompt: payload.prompt,
        selectMode: payload.selectMode,
        cells,
        rows: chunkRows(cells, config.itemsPerRow),
        config,
        selection: [],
        submitButtonColor: config.nothingSelectedButtonColor,
      };
    }
    case "summary":
      return {
        kind: "summary",
        stepId: payload.stepId,
        index: payload.index,
        total: payload.total,
        title: payload.summary.title,
        text: payload.summary.text,
      };
    default:
      return {
        kind: "error",
        message: `unknown step variant ${(payload as { kind?: string }).kind ?? "(none)"}`,
      };
  }
}

/**
 * Toggle an item: multi-select flips membership, single-select replaces the
 * whole selection. Unknown ids are ignored (with a console diagnostic) so a
 * stale click can never corrupt state. Returns a new view model.
 */
export function toggleSelection(view: GridStepView, itemId: string): GridStepView {
  if (!view.cells.some((cell) => cell.itemId === itemId)) {
    console.warn(`toggleSelection: unknown item ${itemId}`);
    return view;
  }
  let selection: string[];
  if (view.selectMode === "single") {
    selection = view.selection.includes(itemId) ? [] : [itemId];
  } else if (view.selection.includes(itemId)) {
    selection = view.selection.filter((id) => id !== itemId);
  } else {
    selection = [...view.selection, itemId];
  }
  const cells = view.cells.map((cell) => ({ ...cell, selected: selection.includes(cell.itemId) }));
  return {
    ...view,
    cells,
    rows: chunkRows(cells, view.config.itemsPerRow),
    selection,
    submitButtonColor: selection.length > 0
      ? view.config.somethingSelectedButtonColor
      : view.config.nothingSelectedButtonColor,
  };
}

/** The answer value a grid submit should post. */
export function gridAnswer(view: GridStepView): string | string[] {
  return view.selectMode === "single" ? view.selection[0] ?? "" : [...view.selection];
}
