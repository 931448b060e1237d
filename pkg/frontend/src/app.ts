/** DOM wiring for the editor page. All state lives in SessionStore; this
 * module only translates events into store calls and state into DOM. */

import { Client } from "./api.js";
import { clickToPixel } from "./geometry.js";
import { splitAtSpan } from "./highlight.js";
import { changedMask, overlayPixels } from "./overlay.js";
import { SessionStore, type UiSessionState } from "./state.js";

function must<T extends HTMLElement>(doc: Document, id: string): T {
  const el = doc.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
}

function renderError(
  doc: Document,
  target: HTMLElement,
  prompt: string,
  message: string,
  span?: string,
): void {
  target.textContent = "";
  target.appendChild(doc.createTextNode(message));
  if (!span) return;
  const parts = splitAtSpan(prompt, span);
  if (!parts.span) return;
  const quoted = doc.createElement("div");
  quoted.className = "prompt-echo";
  quoted.appendChild(doc.createTextNode(parts.before));
  const mark = doc.createElement("mark");
  mark.textContent = parts.span;
  quoted.appendChild(mark);
  quoted.appendChild(doc.createTextNode(parts.after));
  target.appendChild(quoted);
}

export function wireUi(doc: Document, store: SessionStore): void {
  const uploadInput = must<HTMLInputElement>(doc, "upload-input");
  const uploadError = must<HTMLElement>(doc, "upload-error");
  const promptInput = must<HTMLTextAreaElement>(doc, "prompt-input");
  const previewTarget = must<HTMLElement>(doc, "preview-target");
  const previewScope = must<HTMLElement>(doc, "preview-scope");
  const previewDirection = must<HTMLElement>(doc, "preview-direction");
  const previewError = must<HTMLElement>(doc, "preview-error");
  const ratioSlider = must<HTMLInputElement>(doc, "ratio-slider");
  const ratioValue = must<HTMLElement>(doc, "ratio-value");
  const seedStatus = must<HTMLElement>(doc, "seed-status");
  const seedClear = must<HTMLButtonElement>(doc, "seed-clear");
  const applyBtn = must<HTMLButtonElement>(doc, "apply-btn");
  const applyError = must<HTMLElement>(doc, "apply-error");
  const beforeImg = must<HTMLImageElement>(doc, "before-img");
  const afterImg = must<HTMLImageElement>(doc, "after-img");
  const overlayCanvas = must<HTMLCanvasElement>(doc, "overlay-canvas");
  const compareSlider = must<HTMLInputElement>(doc, "compare-slider");
  const overlayToggle = must<HTMLInputElement>(doc, "overlay-toggle");
  const historyList = must<HTMLOListElement>(doc, "history-list");

  let baseUrl: string | null = null;
  let baseBytesShown: Uint8Array | null = null;
  let overlayKey = "";

  const view = doc.defaultView;
  const urlFactory = view?.URL ?? URL;

  function baseImageUrl(state: UiSessionState): string {
    // the service has no GET-by-image-id route, so the original upload is
    // displayed from the bytes the user handed us
    if (typeof urlFactory.createObjectURL !== "function") return "";
    if (state.baseBytes && state.baseBytes !== baseBytesShown) {
      if (baseUrl) urlFactory.revokeObjectURL(baseUrl);
      const copy = new Uint8Array(state.baseBytes);
      baseUrl = urlFactory.createObjectURL(
        new Blob([copy.buffer], { type: "image/png" }),
      );
      baseBytesShown = state.baseBytes;
    }
    return baseUrl ?? "";
  }

  async function refreshOverlay(beforeSrc: string, afterSrc: string) {
    const key = `${beforeSrc}|${afterSrc}`;
    if (key === overlayKey) return;
    const ctx = overlayCanvas.getContext?.("2d");
    if (!ctx) return; // no canvas backend (jsdom) or 2d unavailable
    overlayKey = key;
    try {
      const [a, b] = await Promise.all([loadImage(beforeSrc), loadImage(afterSrc)]);
      const w = b.naturalWidth;
      const h = b.naturalHeight;
      const scratch = doc.createElement("canvas");
      scratch.width = w;
      scratch.height = h;
      const sctx = scratch.getContext("2d");
      if (!sctx) return;
      sctx.drawImage(a, 0, 0, w, h);
      const beforeData = sctx.getImageData(0, 0, w, h);
      sctx.clearRect(0, 0, w, h);
      sctx.drawImage(b, 0, 0, w, h);
      const afterData = sctx.getImageData(0, 0, w, h);
      const mask = changedMask(
        { data: beforeData.data, width: w, height: h },
        { data: afterData.data, width: w, height: h },
      );
      const pixels = overlayPixels(mask, w, h);
      overlayCanvas.width = w;
      overlayCanvas.height = h;
      const buf = new Uint8ClampedArray(pixels.data.length);
      buf.set(pixels.data);
      ctx.putImageData(new ImageData(buf, w, h), 0, 0);
    } catch {
      overlayKey = ""; // retry on next render
    }
  }

  function loadImage(src: string): Promise<HTMLImageElement> {
    return new Promise((resolve, reject) => {
      const img = doc.createElement("img");
      img.crossOrigin = "anonymous";
      img.onload = () => resolve(img);
      img.onerror = () => reject(new Error(`failed to load ${src}`));
      img.src = src;
    });
  }

  function render(state: UiSessionState): void {
    uploadError.textContent = state.uploadError ?? "";

    const inst = state.preview.instruction;
    if (state.preview.pending) {
      previewTarget.textContent = "…";
      previewScope.textContent = "";
      previewDirection.textContent = "";
    } else if (inst) {
      previewTarget.textContent = inst.target_phrase;
      previewScope.textContent = inst.scope;
      previewDirection.textContent = inst.direction;
    } else {
      previewTarget.textContent = "";
      previewScope.textContent = "";
      previewDirection.textContent = "";
    }
    if (state.preview.error) {
      renderError(
        doc,
        previewError,
        state.prompt,
        state.preview.error.message,
        state.preview.error.span,
      );
    } else {
      previewError.textContent = "";
    }

    const ratio = store.effectiveRatio();
    ratioSlider.disabled = ratio === null;
    if (ratio !== null && doc.activeElement !== ratioSlider) {
      ratioSlider.value = String(Math.round(ratio * 100));
    }
    ratioValue.textContent = ratio === null ? "" : ratio.toFixed(2);

    seedStatus.textContent = state.seedPoint
      ? `seed (${state.seedPoint[0]}, ${state.seedPoint[1]})`
      : "no seed point";
    seedClear.disabled = state.seedPoint === null;

    applyBtn.disabled =
      state.applying || !state.sessionId || state.prompt.trim() === "";
    applyBtn.textContent = state.applying ? "Applying…" : "Apply";

    if (state.applyError) {
      renderError(
        doc,
        applyError,
        state.prompt,
        state.applyError.message,
        state.applyError.span,
      );
    } else {
      applyError.textContent = "";
    }

    const base = state.baseImageId ? baseImageUrl(state) : "";
    const viewedId = store.viewedResultId();
    const prevId = store.previousResultId();
    const afterSrc = viewedId ? store.client.resultImageUrl(viewedId) : base;
    const beforeSrc = prevId ? store.client.resultImageUrl(prevId) : base;
    if (beforeImg.getAttribute("src") !== beforeSrc) {
      beforeImg.src = beforeSrc;
    }
    if (afterImg.getAttribute("src") !== afterSrc) {
      afterImg.src = afterSrc;
    }

    const keep = state.sliderPosition * 100;
    afterImg.style.clipPath = `inset(0 ${100 - keep}% 0 0)`;
    if (doc.activeElement !== compareSlider) {
      compareSlider.value = String(Math.round(keep));
    }

    overlayCanvas.style.display = state.maskOverlay ? "block" : "none";
    overlayToggle.checked = state.maskOverlay;
    if (state.maskOverlay && viewedId && beforeSrc && afterSrc) {
      void refreshOverlay(beforeSrc, afterSrc);
    }

    historyList.textContent = "";
    state.history.forEach((entry, i) => {
      const li = doc.createElement("li");
      if (i === state.selected) li.className = "selected";
      const label = doc.createElement("span");
      label.textContent = `${i + 1}. ${entry.prompt}`;
      li.appendChild(label);
      const viewBtn = doc.createElement("button");
      viewBtn.textContent = "view";
      viewBtn.addEventListener("click", () => store.selectHistory(i));
      li.appendChild(viewBtn);
      const revertBtn = doc.createElement("button");
      revertBtn.textContent = "revert to here";
      revertBtn.disabled = state.applying;
      revertBtn.addEventListener("click", () => void store.revertTo(i));
      li.appendChild(revertBtn);
      historyList.appendChild(li);
    });
  }

  uploadInput.addEventListener("change", () => {
    const file = uploadInput.files?.[0];
    if (!file) return;
    void file.arrayBuffer().then((buf) => {
      void store.startSession(new Uint8Array(buf));
    });
  });

  promptInput.addEventListener("input", () => {
    store.setPrompt(promptInput.value);
  });

  ratioSlider.addEventListener("input", () => {
    store.moveRatioSlider(Number(ratioSlider.value) / 100);
  });

  seedClear.addEventListener("click", () => store.setSeedPoint(null));

  afterImg.addEventListener("click", (ev) => {
    if (!afterImg.naturalWidth) return;
    const rect = afterImg.getBoundingClientRect();
    const point = clickToPixel(
      ev.clientX - rect.left,
      ev.clientY - rect.top,
      { width: rect.width, height: rect.height },
      { width: afterImg.naturalWidth, height: afterImg.naturalHeight },
    );
    store.setSeedPoint(point);
  });

  applyBtn.addEventListener("click", () => void store.apply());

  compareSlider.addEventListener("input", () => {
    store.setSliderPosition(Number(compareSlider.value) / 100);
  });

  overlayToggle.addEventListener("change", () => store.toggleMaskOverlay());

  store.subscribe(render);
  render(store.state);
}

// Bootstrap only on the real page; tests call wireUi with their own store.
const rootEl =
  typeof document !== "undefined"
    ? document.querySelector("main[data-lumactl-app]")
    : null;
if (rootEl) {
  const params = new URLSearchParams(window.location.search);
  const api = params.get("api") ?? "";
  wireUi(document, new SessionStore(new Client(api)));
}
