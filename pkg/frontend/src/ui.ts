/** DOM wiring: renders the editor state and dispatches user actions. */

import { ApiError, bannerText, requestSuggestions } from "./api.js";
import {
  EditorState,
  acceptSuggestion,
  addChip,
  beginRequest,
  buildGenerateRequest,
  countWords,
  initialState,
  receiveFailure,
  receiveSuggestions,
  removeChip,
  setSelection,
  setWordRange,
  suggestionWithinRange,
  undo,
} from "./state.js";

const SAMPLE_TEXT =
  "the old man walked slowly through the quiet park. " +
  "the children played near the river all afternoon.";

export function mountPlayground(root: HTMLElement, baseUrl: string): void {
  let state: EditorState = initialState(SAMPLE_TEXT);

  root.innerHTML = `
    <h1>hmmguide playground</h1>
    <p class="hint">Place the cursor for a continuation, or select a gap for an insertion.
    Add keyphrase chips (comma-separated alternatives) and an optional word range,
    then ask for suggestions.</p>
    <textarea id="doc" rows="8"></textarea>
    <div class="controls">
      <input id="chip-input" placeholder="keyphrase, alternative, ..." />
      <button id="add-chip">Add keyphrase</button>
      <div id="chips"></div>
      <label><input type="checkbox" id="range-on" /> words between
        <input type="number" id="range-min" value="4" min="1" max="32" /> and
        <input type="number" id="range-max" value="10" min="1" max="32" />
      </label>
      <label>suggestions <input type="number" id="num" value="4" min="1" max="16" /></label>
      <label>seed <input type="number" id="seed" placeholder="random" /></label>
      <button id="go">Suggest</button>
      <button id="undo">Undo</button>
    </div>
    <div id="banner" class="banner" hidden></div>
    <ol id="suggestions"></ol>
  `;

  const doc = root.querySelector<HTMLTextAreaElement>("#doc")!;
  const chipInput = root.querySelector<HTMLInputElement>("#chip-input")!;
  const chipsBox = root.querySelector<HTMLElement>("#chips")!;
  const banner = root.querySelector<HTMLElement>("#banner")!;
  const list = root.querySelector<HTMLOListElement>("#suggestions")!;

  function render(): void {
    if (doc.value !== state.document) doc.value = state.document;
    chipsBox.innerHTML = "";
    state.keyphraseChips.forEach((chip, i) => {
      const el = document.createElement("span");
      el.className = "chip";
      el.textContent = chip.join(" | ");
      const x = document.createElement("button");
      x.textContent = "x";
      x.addEventListener("click", () => {
        state = removeChip(state, i);
        render();
      });
      el.appendChild(x);
      chipsBox.appendChild(el);
    });
    banner.hidden = state.banner === null;
    banner.textContent = state.banner ?? "";
    list.innerHTML = "";
    state.suggestions.forEach((s, i) => {
      const item = document.createElement("li");
      const words = countWords(s.text);
      const inRange = suggestionWithinRange(s, state.wordRange);
      item.innerHTML =
        `<button class="accept">accept</button> <span class="text"></span>` +
        `<span class="badge">loglik ${s.loglik.toFixed(2)}</span>` +
        `<span class="badge">${words} words${inRange ? "" : " (!)"}</span>` +
        `<span class="badge ok">verified</span>`;
      item.querySelector<HTMLElement>(".text")!.textContent = s.text;
      item.querySelector<HTMLButtonElement>(".accept")!.addEventListener("click", () => {
        state = acceptSuggestion(state, i);
        render();
      });
      list.appendChild(item);
    });
  }

  doc.addEventListener("input", () => {
    state = { ...state, document: doc.value };
  });
  doc.addEventListener("select", () => {
    state = setSelection(state, doc.selectionStart, doc.selectionEnd);
  });
  doc.addEventListener("click", () => {
    state = setSelection(state, doc.selectionStart, doc.selectionEnd);
  });
  doc.addEventListener("keyup", () => {
    state = setSelection(state, doc.selectionStart, doc.selectionEnd);
  });

  root.querySelector("#add-chip")!.addEventListener("click", () => {
    state = addChip(state, chipInput.value);
    chipInput.value = "";
    render();
  });

  root.querySelector("#go")!.addEventListener("click", async () => {
    const rangeOn = root.querySelector<HTMLInputElement>("#range-on")!.checked;
    const min = Number(root.querySelector<HTMLInputElement>("#range-min")!.value);
    const max = Number(root.querySelector<HTMLInputElement>("#range-max")!.value);
    state = setWordRange(state, rangeOn ? { min, max } : null);
    state.numSuggestions = Number(root.querySelector<HTMLInputElement>("#num")!.value) || 4;
    const seedRaw = root.querySelector<HTMLInputElement>("#seed")!.value;
    state.seed = seedRaw === "" ? null : Number(seedRaw);

    const [next, requestId] = beginRequest(state);
    state = next;
    render();
    try {
      const response = await requestSuggestions(baseUrl, buildGenerateRequest(state));
      state = receiveSuggestions(state, requestId, response.suggestions);
    } catch (err) {
      const message = err instanceof ApiError ? bannerText(err.failure) : String(err);
      state = receiveFailure(state, requestId, message);
    }
    render();
  });

  root.querySelector("#undo")!.addEventListener("click", () => {
    state = undo(state);
    render();
  });

  render();
}
