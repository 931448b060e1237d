/** Session state machine for the editor page.
 *
 * Owns everything the DOM layer renders: the active session, the live parse
 * preview, the edit history, and the view selection. All pixel data comes
 * from the service; the only image bytes held here are the user's original
 * upload, kept so the first "before" pane can show it.
 */

import {
  ApiError,
  Client,
  type EnhanceParams,
  type EnhanceResponse,
  type HistoryEntry,
  type Instruction,
} from "./api.js";
import { debounce } from "./debounce.js";
import { clampSlider, snapRatio } from "./geometry.js";

export interface UiError {
  message: string;
  kind?: string;
  span?: string;
  stage?: string;
}

export interface ParsePreview {
  pending: boolean;
  instruction: Instruction | null;
  error: UiError | null;
}

export interface UiSessionState {
  sessionId: string | null;
  baseImageId: string | null;
  baseBytes: Uint8Array | null;
  prompt: string;
  preview: ParsePreview;
  /** Slider-edited ratio; null means "use whatever the parser said". */
  ratioOverride: number | null;
  seedPoint: [number, number] | null;
  history: HistoryEntry[];
  /** Index of the history entry being viewed; -1 shows the base image. */
  selected: number;
  applying: boolean;
  maskOverlay: boolean;
  sliderPosition: number;
  applyError: UiError | null;
  uploadError: string | null;
}

function emptyState(): UiSessionState {
  return {
    sessionId: null,
    baseImageId: null,
    baseBytes: null,
    prompt: "",
    preview: { pending: false, instruction: null, error: null },
    ratioOverride: null,
    seedPoint: null,
    history: [],
    selected: -1,
    applying: false,
    maskOverlay: false,
    sliderPosition: 0.5,
    applyError: null,
    uploadError: null,
  };
}

function toUiError(err: unknown): UiError {
  if (err instanceof ApiError) {
    const out: UiError = { message: err.message };
    if (err.kind !== undefined) out.kind = err.kind;
    if (err.span !== undefined) out.span = err.span;
    if (err.stage !== undefined) out.stage = err.stage;
    return out;
  }
  return { message: err instanceof Error ? err.message : String(err) };
}

export class SessionStore {
  readonly state: UiSessionState = emptyState();

  private readonly listeners = new Set<(s: UiSessionState) => void>();
  private readonly scheduleParse: ((prompt: string) => void) & {
    cancel(): void;
  };
  private parseSeq = 0;

  constructor(
    readonly client: Client,
    debounceMs = 300,
  ) {
    this.scheduleParse = debounce((prompt: string) => {
      void this.runParse(prompt);
    }, debounceMs);
  }

  subscribe(fn: (s: UiSessionState) => void): () => void {
    this.listeners.add(fn);
    return () => this.listeners.delete(fn);
  }

  private emit(): void {
    for (const fn of this.listeners) fn(this.state);
  }

  /** Upload a PNG and open a fresh session on it. */
  async startSession(png: Uint8Array): Promise<boolean> {
    try {
      const imageId = await this.client.uploadImage(png);
      const sessionId = await this.client.createSession(imageId);
      Object.assign(this.state, emptyState(), {
        sessionId,
        baseImageId: imageId,
        baseBytes: png,
      });
      this.emit();
      return true;
    } catch (err) {
      this.state.uploadError = toUiError(err).message;
      this.emit();
      return false;
    }
  }

  setPrompt(text: string): void {
    this.state.prompt = text;
    if (text.trim() === "") {
      this.scheduleParse.cancel();
      this.parseSeq++; // orphan any in-flight parse
      this.state.preview = { pending: false, instruction: null, error: null };
    } else {
      this.state.preview = { ...this.state.preview, pending: true };
      this.scheduleParse(text);
    }
    this.emit();
  }

  private async runParse(prompt: string): Promise<void> {
    if (!this.state.sessionId) return;
    const seq = ++this.parseSeq;
    try {
      const instruction = await this.client.parse(this.state.sessionId, prompt);
      if (seq !== this.parseSeq) return; // a newer parse superseded this one
      this.state.preview = { pending: false, instruction, error: null };
    } catch (err) {
      if (seq !== this.parseSeq) return;
      this.state.preview = {
        pending: false,
        instruction: null,
        error: toUiError(err),
      };
    }
    this.emit();
  }

  /** Ratio coming from the slider; snapped to hundredths. */
  moveRatioSlider(value: number): void {
    this.state.ratioOverride = snapRatio(value);
    this.emit();
  }

  clearRatioOverride(): void {
    this.state.ratioOverride = null;
    this.emit();
  }

  /** The ratio the next apply will request. */
  effectiveRatio(): number | null {
    if (this.state.ratioOverride !== null) return this.state.ratioOverride;
    return this.state.preview.instruction?.ratio ?? null;
  }

  setSeedPoint(point: [number, number] | null): void {
    this.state.seedPoint = point;
    this.emit();
  }

  toggleMaskOverlay(): void {
    this.state.maskOverlay = !this.state.maskOverlay;
    this.emit();
  }

  setSliderPosition(value: number): void {
    this.state.sliderPosition = clampSlider(value);
    this.emit();
  }

  /**
   * Run the current prompt. Only one enhance may be in flight per session;
   * returns null without sending anything if one already is.
   */
  async apply(): Promise<EnhanceResponse | null> {
    if (this.state.applying) return null;
    const { sessionId, prompt } = this.state;
    if (!sessionId || prompt.trim() === "") return null;

    this.state.applying = true;
    this.state.applyError = null;
    this.emit();
    try {
      const params: EnhanceParams = {};
      if (this.state.seedPoint) params.seed_point = this.state.seedPoint;
      if (this.state.ratioOverride !== null) {
        params.ratio_override = this.state.ratioOverride;
      }
      const resp = await this.client.enhance(sessionId, prompt, params);
      this.state.history = await this.client.history(sessionId);
      this.state.selected = this.state.history.length - 1;
      this.state.ratioOverride = null;
      return resp;
    } catch (err) {
      this.state.applyError = toUiError(err);
      return null;
    } finally {
      this.state.applying = false;
      this.emit();
    }
  }

  /** View an earlier result without changing the edit chain. */
  selectHistory(index: number): void {
    const max = this.state.history.length - 1;
    this.state.selected = Math.min(Math.max(index, -1), max);
    this.emit();
  }

  /**
   * Discard everything after history[index] by opening a new session on the
   * original image and replaying the surviving prefix with each entry's
   * recorded parameters.
   */
  async revertTo(index: number): Promise<boolean> {
    if (this.state.applying) return false;
    const { baseImageId } = this.state;
    if (!baseImageId || index < 0 || index >= this.state.history.length) {
      return false;
    }
    const prefix = this.state.history.slice(0, index + 1);

    this.state.applying = true;
    this.state.applyError = null;
    this.emit();
    try {
      const sessionId = await this.client.createSession(baseImageId);
      for (const entry of prefix) {
        await this.client.enhance(sessionId, entry.prompt, entry.request);
      }
      this.state.sessionId = sessionId;
      this.state.history = await this.client.history(sessionId);
      this.state.selected = this.state.history.length - 1;
      return true;
    } catch (err) {
      this.state.applyError = toUiError(err);
      return false;
    } finally {
      this.state.applying = false;
      this.emit();
    }
  }

  /** Result id of the entry being viewed, or null when viewing the base. */
  viewedResultId(): string | null {
    const { selected, history } = this.state;
    if (selected < 0 || selected >= history.length) return null;
    return history[selected]!.result_id;
  }

  /** Result id shown in the "before" pane for the viewed entry. */
  previousResultId(): string | null {
    const { selected, history } = this.state;
    if (selected <= 0 || selected > history.length) return null;
    return history[selected - 1]!.result_id;
  }
}
