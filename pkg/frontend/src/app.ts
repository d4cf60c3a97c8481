/** Browser wiring for the style explorer: upload a photo, steer the mixture. */

import { ApiClient, ModelInfo, ServiceError, TranslateResponse } from "./api.js";
import { debounceLatest } from "./debounce.js";
import { collectSweepGallery } from "./gallery.js";
import { applySliderChange, formatWeights, isOnSimplex, vertex } from "./simplex.js";

interface ExplorerState {
  models: ModelInfo[];
  selected: ModelInfo | null;
  imageB64: string | null;
  weights: number[];
  scalarZ: number;
}

const state: ExplorerState = {
  models: [],
  selected: null,
  imageB64: null,
  weights: [],
  scalarZ: 0.5,
};

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
};

const api = new ApiClient("");

function toast(message: string) {
  const el = $("toast");
  el.textContent = message;
  el.classList.add("visible");
  setTimeout(() => el.classList.remove("visible"), 4000);
}

function currentZ(): number | number[] {
  if (!state.selected) throw new Error("no model selected");
  return state.selected.num_targets > 1 ? [...state.weights] : state.scalarZ;
}

const dispatchTranslate = debounceLatest(
  async (_args: null) => {
    if (!state.selected || !state.imageB64) throw new Error("not ready");
    const z = currentZ();
    if (Array.isArray(z) && !isOnSimplex(z)) throw new Error("weights left the simplex");
    return api.translate(state.selected.id, state.imageB64, z);
  },
  (result: TranslateResponse) => {
    const img = $("result") as HTMLImageElement;
    img.src = `data:image/png;base64,${result.image}`;
    $("latency").textContent = `${result.latency_ms.toFixed(1)} ms`;
  },
  150,
  (err) => {
    if (err instanceof ServiceError) toast(`service: ${err.message}`);
    else toast(String(err));
  },
);

function maybeTranslate() {
  if (state.selected && state.imageB64) dispatchTranslate(null);
}

function renderSliders() {
  const host = $("sliders");
  host.innerHTML = "";
  if (!state.selected) return;
  const model = state.selected;

  if (model.num_targets <= 1) {
    host.appendChild(
      sliderRow(`${model.domains[0]} → ${model.domains[1] ?? "target"}`, state.scalarZ, (v) => {
        state.scalarZ = Math.min(1, Math.max(0, v));
        renderSliders();
        maybeTranslate();
      }),
    );
    return;
  }

  const labels = formatWeights(state.weights);
  model.domains.slice(1).forEach((name, k) => {
    host.appendChild(
      sliderRow(`${name} (${labels[k]})`, state.weights[k], (v) => {
        state.weights = applySliderChange(state.weights, k, v);
        renderSliders();
        maybeTranslate();
      }),
    );
  });
  $("sum-label").textContent = `weights sum: ${labels
    .map(Number)
    .reduce((a, b) => a + b, 0)
    .toFixed(2)}`;
}

function sliderRow(label: string, value: number, onInput: (v: number) => void): HTMLElement {
  const row = document.createElement("div");
  row.className = "slider-row";
  const span = document.createElement("label");
  span.textContent = label;
  const range = document.createElement("input");
  range.type = "range";
  range.min = "0";
  range.max = "1";
  range.step = "0.01";
  range.value = String(value);
  range.addEventListener("input", () => onInput(Number(range.value)));
  const num = document.createElement("input");
  num.type = "number";
  num.min = "0";
  num.max = "1";
  num.step = "0.01";
  num.value = value.toFixed(2);
  num.addEventListener("change", () => onInput(Number(num.value)));
  row.append(span, range, num);
  return row;
}

function selectModel(id: string) {
  state.selected = state.models.find((m) => m.id === id) ?? null;
  if (state.selected && state.selected.num_targets > 1) {
    const k = state.selected.num_targets;
    state.weights = Array.from({ length: k }, () => 1 / k);
  }
  renderSliders();
  renderSweepControls();
  maybeTranslate();
}

function renderSweepControls() {
  const host = $("sweep-controls");
  host.innerHTML = "";
  if (!state.selected) return;
  const model = state.selected;
  const targets = model.num_targets > 1 ? model.domains.slice(1) : ["sweep"];

  const mkSelect = (id: string) => {
    const sel = document.createElement("select");
    sel.id = id;
    targets.forEach((name, i) => {
      const opt = document.createElement("option");
      opt.value = String(i);
      opt.textContent = name;
      sel.appendChild(opt);
    });
    return sel;
  };
  const fromSel = mkSelect("sweep-from");
  const toSel = mkSelect("sweep-to");
  if (targets.length > 1) toSel.selectedIndex = 1;
  const steps = document.createElement("input");
  steps.type = "number";
  steps.id = "sweep-steps";
  steps.min = "1";
  steps.max = "12";
  steps.value = "5";
  const button = document.createElement("button");
  button.textContent = "render sweep";
  button.addEventListener("click", async () => {
    if (!state.selected || !state.imageB64) {
      toast("upload an image first");
      return;
    }
    try {
      const cells = await collectSweepGallery(
        api,
        state.selected.id,
        state.imageB64,
        state.selected.num_targets,
        Number(fromSel.value),
        Number(toSel.value),
        Number(steps.value),
      );
      const gallery = $("gallery");
      gallery.innerHTML = "";
      cells.forEach((cell) => {
        const fig = document.createElement("figure");
        const img = document.createElement("img");
        img.src = `data:image/png;base64,${cell.image}`;
        const cap = document.createElement("figcaption");
        cap.textContent = Array.isArray(cell.z)
          ? formatWeights(cell.z).join("/")
          : Number(cell.z).toFixed(2);
        fig.append(img, cap);
        gallery.appendChild(fig);
      });
    } catch (err) {
      toast(err instanceof ServiceError ? `service: ${err.message}` : String(err));
    }
  });
  if (model.num_targets > 1) {
    host.append(fromSel, document.createTextNode(" → "), toSel);
  }
  host.append(steps, button);
}

async function boot() {
  try {
    state.models = await api.info();
  } catch {
    toast("inference service unreachable");
    return;
  }
  const select = $("model-select") as HTMLSelectElement;
  select.innerHTML = "";
  state.models.forEach((m) => {
    const opt = document.createElement("option");
    opt.value = m.id;
    opt.textContent = `${m.id} (${m.domains.join(", ")})`;
    select.appendChild(opt);
  });
  select.addEventListener("change", () => selectModel(select.value));
  if (state.models.length > 0) selectModel(state.models[0].id);

  const upload = $("upload") as HTMLInputElement;
  upload.addEventListener("change", () => {
    const file = upload.files?.[0];
    if (!file) return;
    const reader = new FileReader();
    reader.onload = () => {
      const dataUrl = String(reader.result);
      state.imageB64 = dataUrl.slice(dataUrl.indexOf(",") + 1);
      ($("original") as HTMLImageElement).src = dataUrl;
      maybeTranslate();
    };
    reader.readAsDataURL(file);
  });

  document.querySelectorAll<HTMLButtonElement>("[data-vertex]").forEach((btn) => {
    btn.addEventListener("click", () => {
      if (!state.selected || state.selected.num_targets <= 1) return;
      state.weights = vertex(state.selected.num_targets, Number(btn.dataset.vertex));
      renderSliders();
      maybeTranslate();
    });
  });
}

boot();
