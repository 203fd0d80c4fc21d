/** Wire payloads exactly as the /v1 service emits them. */

export interface ChoicePayload {
  text: string;
  value: string;
  color: string;
}

export interface ItemPayload {
  identifier: string;
  description: string;
  imageTitle: string;
}

export interface GridOptionsPayload {
  somethingSelectedButtonColor: string;
  nothingSelectedButtonColor: string;
  itemCellSelectedColor: string;
  itemCellSelectedOverlayImageTitle: string;
  itemCollectionViewBackgroundColor: string;
  itemsPerRow: number;
  itemMinSpacing: number;
}

export interface SingleChoiceStepPayload {
  stepId: string;
  kind: "single_choice_image";
  index: number;
  total: number;
  prompt: string;
  item: ItemPayload;
  choices: ChoicePayload[];
}

export interface GridStepPayload {
  stepId: string;
  kind: "image_grid";
  index: number;
  total: number;
  prompt: string;
  selectMode: "multi" | "single";
  items: ItemPayload[];
  options: GridOptionsPayload | null;
}

export interface SummaryStepPayload {
  stepId: string;
  kind: "summary";
  index: number;
  total: number;
  summary: { identifier: string; title: string; text: string };
}

export type StepPayload = SingleChoiceStepPayload | GridStepPayload | SummaryStepPayload;

export interface SessionBody {
  sessionId: string;
  done: boolean;
  step?: StepPayload;
  envelopeId?: string;
  occurrenceId?: string;
  taskKind?: string;
  studyId?: string;
}

export interface OccurrencePayload {
  occurrenceId: string;
  participantId: string;
  taskRef: { assessmentId: string; kind: "full" | "spot" | "pam" };
  dueAt: string;
  expiresAt: string;
  remindAt: string;
  snoozeCount: number;
  state: string;
  sessionId: string | null;
  activeItemsEmpty: boolean | null;
}

export interface ApiErrorBody {
  httpStatus: number;
  code: string;
  message: string;
  path: string;
}
