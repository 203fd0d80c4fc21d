/**
 * Survey app controller: lists due surveys, runs one session at a time.
 *
 * One in-flight submit at most: the UI is re-rendered only after the server
 * responds, and a 422 re-renders the current step with the message inline
 * while keeping the participant's selection intact.
 */

import { ApiClient, ApiRequestError } from "./api.js";
import { renderDueList, renderNotice, renderStep, type StepHandlers } from "./render.js";
import type { OccurrencePayload, SessionBody, StepPayload } from "./types.js";
import { buildStepView, gridAnswer, toggleSelection, type StepViewModel } from "./viewmodel.js";

export class SurveyApp {
  readonly api: ApiClient;
  readonly participantId: string;
  private readonly root: HTMLElement;
  private readonly doc: Document;

  sessionId: string | null = null;
  view: StepViewModel | null = null;
  lastError: string | null = null;
  lastEnvelopeId: string | null = null;
  private submitting = false;

  constructor(root: HTMLElement, api: ApiClient, participantId: string) {
    this.root = root;
    this.doc = root.ownerDocument;
    this.api = api;
    this.participantId = participantId;
  }

  // -- screens ---------------------------------------------------------------

  async showDue(): Promise<void> {
    const occurrences = await this.api.getDue(this.participantId);
    this.sessionId = null;
    this.view = null;
    this.mount(renderDueList(this.doc, occurrences,
      (occ) => void this.start(occ),
      (occ) => void this.snooze(occ)));
  }

  async start(occ: OccurrencePayload): Promise<void> {
    const body = await this.api.createSession(this.participantId, occ.occurrenceId);
    this.applySession(body);
  }

  async snooze(occ: OccurrencePayload): Promise<void> {
    try {
      await this.api.snooze(occ.occurrenceId);
    } catch (error) {
      this.lastError = error instanceof ApiRequestError ? error.message : String(error);
    }
    await this.showDue();
  }

  // -- step transitions --------------------------------------------------------

  private applySession(body: SessionBody): void {
    this.sessionId = body.sessionId;
    if (body.done) {
      this.lastEnvelopeId = body.envelopeId ?? null;
      this.view = null;
      this.mount(renderNotice(this.doc, "Survey complete. Thank you!", "completion-notice"));
      return;
    }
    this.view = buildStepView(body.step as StepPayload);
    this.lastError = null;
    this.renderCurrent();
  }

  private handlers(): StepHandlers {
    return {
      onChoice: (value) => void this.submitAnswer(value),
      onToggle: (itemId) => this.toggle(itemId),
      onGridSubmit: () => {
        if (this.view?.kind === "grid") void this.submitAnswer(gridAnswer(this.view));
      },
      onAck: () => void this.acknowledge(),
      onBack: () => void this.goBack(),
    };
  }

  toggle(itemId: string): void {
    if (this.view?.kind !== "grid") return;
    this.view = toggleSelection(this.view, itemId);
    this.renderCurrent();
  }

  async submitAnswer(answer: string | string[] | null): Promise<void> {
    if (!this.sessionId || this.submitting) return;
    this.submitting = true;
    try {
      const body = await this.api.postAnswer(this.sessionId, answer);
      this.applySession(body);
    } catch (error) {
      this.handleSubmitError(error);
    } finally {
      this.submitting = false;
    }
  }

  async acknowledge(): Promise<void> {
    if (!this.sessionId || this.submitting) return;
    this.submitting = true;
    try {
      const body = await this.api.completeAck(this.sessionId);
      this.applySession(body);
    } catch (error) {
      this.handleSubmitError(error);
    } finally {
      this.submitting = false;
    }
  }

  async goBack(): Promise<void> {
    if (!this.sessionId || this.submitting) return;
    this.submitting = true;
    try {
      const body = await this.api.goBack(this.sessionId);
      this.applySession(body);
    } catch (error) {
      this.handleSubmitError(error);
    } finally {
      this.submitting = false;
    }
  }

  /** 422: step re-rendered with the message, selection intact. Network
   *  failure: retry prompt, answer preserved locally. */
  private handleSubmitError(error: unknown): void {
    if (error instanceof ApiRequestError) {
      this.lastError = error.message;
    } else {
      this.lastError = "Could not reach the server. Your answer is kept; please retry.";
    }
    this.renderCurrent();
  }

  // -- rendering ----------------------------------------------------------------

  private renderCurrent(): void {
    if (!this.view) return;
    const node = renderStep(this.doc, this.view, this.handlers(),
      (title) => this.api.assetUrl(title));
    if (this.lastError) {
      node.prepend(renderNotice(this.doc, this.lastError, "inline-error"));
    }
    this.mount(node);
  }

  private mount(node: HTMLElement): void {
    this.root.replaceChildren(node);
  }
}
