// Studio app: parse a description, pick local-action candidates, adjust
// guiding weights, generate, and replay results.

import { ApiClient, ApiError } from "./api.js";
import { Player } from "./player.js";
import {
  SessionState,
  composeAndGenerate,
  initialState,
  withCandidates,
  withCompare,
  withDescription,
  withMultiplier,
  withParse,
  withRho,
  withSeed,
  withSelection,
} from "./state.js";
import type { MotionPayload } from "./types.js";

const params = new URLSearchParams(window.location.search);
const apiBase = params.get("api") ?? "http://127.0.0.1:8080";
const client = new ApiClient(apiBase);

let state: SessionState = initialState();
let busy = false;
const motionCache = new Map<string, MotionPayload>();

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
};

const descriptionInput = $<HTMLTextAreaElement>("description");
const parseButton = $<HTMLButtonElement>("parse-btn");
const sampleButton = $<HTMLButtonElement>("sample-btn");
const generateButton = $<HTMLButtonElement>("generate-btn");
const statusLine = $<HTMLDivElement>("status");
const graphView = $<HTMLDivElement>("graph-view");
const actionsView = $<HTMLDivElement>("actions-view");
const rhoInput = $<HTMLInputElement>("rho");
const seedInput = $<HTMLInputElement>("seed");
const historyView = $<HTMLUListElement>("history");
const diagView = $<HTMLPreElement>("diagnostics");
const mainCanvas = $<HTMLCanvasElement>("player-canvas");
const scrubber = $<HTMLInputElement>("scrubber");
const playButton = $<HTMLButtonElement>("play-btn");
const pauseButton = $<HTMLButtonElement>("pause-btn");
const compareView = $<HTMLDivElement>("compare-view");

const player = new Player(mainCanvas, (frame) => {
  scrubber.value = String(frame);
});

function setStatus(text: string, isError = false): void {
  statusLine.textContent = text;
  statusLine.className = isError ? "status error" : "status";
}

function setBusy(value: boolean): void {
  busy = value;
  for (const b of [parseButton, sampleButton, generateButton]) {
    b.disabled = value;
  }
}

async function guard(label: string, task: () => Promise<void>): Promise<void> {
  if (busy) return;
  setBusy(true);
  setStatus(`${label}…`);
  try {
    await task();
    setStatus("ready");
  } catch (err) {
    const message = err instanceof ApiError
      ? `${err.code}: ${err.message}`
      : String(err);
    setStatus(message, true);
  } finally {
    setBusy(false);
  }
}

function renderGraph(): void {
  if (!state.parse) {
    graphView.textContent = "no parse yet";
    return;
  }
  const { graph, lambdas } = state.parse;
  const parts: string[] = [];
  for (const node of graph.nodes) {
    if (node.kind !== "action") continue;
    const idx = graph.nodes.filter((n) => n.kind === "action")
      .findIndex((n) => n.id === node.id);
    const lam = lambdas[idx];
    parts.push(
      `<div class="action-node"><strong>${node.text}</strong>` +
      `<span class="lam">λ=${lam === undefined ? "?" : lam.toFixed(4)}</span></div>`,
    );
  }
  const specifics = graph.nodes
    .filter((n) => n.kind === "specific")
    .map((n) => {
      const edge = graph.edges.find((e) => e.from === n.id);
      return `<span class="chip">${n.text} <em>${edge?.type ?? "?"}</em></span>`;
    })
    .join(" ");
  graphView.innerHTML = parts.join("") +
    `<div class="specifics">${specifics}</div>`;
}

function renderActions(): void {
  actionsView.innerHTML = "";
  state.actions.forEach((slot, index) => {
    const row = document.createElement("div");
    row.className = "action-row";
    const title = document.createElement("div");
    title.className = "action-title";
    title.textContent = slot.description;
    row.appendChild(title);

    const strip = document.createElement("div");
    strip.className = "candidates";
    slot.candidates.forEach((candidate) => {
      const cell = document.createElement("canvas");
      cell.width = 110;
      cell.height = 110;
      cell.className = candidate.id === slot.selectedId
        ? "candidate selected"
        : "candidate";
      cell.title = `seed ${candidate.seed}`;
      const preview = new Player(cell);
      preview.setMotion(candidate.preview);
      preview.drawFrame(Math.floor(candidate.preview.n_frames / 2));
      cell.addEventListener("click", () => {
        state = withSelection(state, index, candidate.id);
        renderActions();
      });
      strip.appendChild(cell);
    });
    row.appendChild(strip);

    const sliderWrap = document.createElement("label");
    sliderWrap.className = "slider";
    const slider = document.createElement("input");
    slider.type = "range";
    slider.min = "0";
    slider.max = "4";
    slider.step = "0.05";
    slider.value = String(slot.multiplier);
    const value = document.createElement("span");
    value.textContent = `×${slot.multiplier.toFixed(2)}`;
    slider.addEventListener("input", () => {
      state = withMultiplier(state, index, Number(slider.value));
      value.textContent = `×${Number(slider.value).toFixed(2)}`;
    });
    sliderWrap.append("weight ", slider, value);
    row.appendChild(sliderWrap);
    actionsView.appendChild(row);
  });
}

function renderHistory(): void {
  historyView.innerHTML = "";
  for (const entry of state.history) {
    const li = document.createElement("li");
    const label = document.createElement("span");
    label.textContent =
      `#${entry.id} seed=${entry.settings.seed} ρ=${entry.settings.rho} ` +
      `w=[${entry.settings.multipliers.map((m) => m.toFixed(2)).join(", ")}]`;
    li.appendChild(label);
    const show = document.createElement("button");
    show.textContent = "play";
    show.addEventListener("click", () => {
      void guard("loading motion", async () => {
        const motion = await fetchMotion(entry.motionId);
        loadIntoPlayer(motion);
      });
    });
    const cmpL = document.createElement("button");
    cmpL.textContent = "A";
    cmpL.addEventListener("click", () => {
      state = withCompare(state, entry.id, state.compare[1]);
      void renderCompare();
    });
    const cmpR = document.createElement("button");
    cmpR.textContent = "B";
    cmpR.addEventListener("click", () => {
      state = withCompare(state, state.compare[0], entry.id);
      void renderCompare();
    });
    li.append(show, cmpL, cmpR);
    historyView.appendChild(li);
  }
}

async function fetchMotion(motionId: string): Promise<MotionPayload> {
  const cached = motionCache.get(motionId);
  if (cached) return cached;
  const motion = await client.getMotion(motionId);
  motionCache.set(motionId, motion);
  return motion;
}

function loadIntoPlayer(motion: MotionPayload): void {
  player.setMotion(motion);
  scrubber.max = String(Math.max(0, motion.n_frames - 1));
  scrubber.value = "0";
  player.play();
}

async function renderCompare(): Promise<void> {
  compareView.innerHTML = "";
  const [left, right] = state.compare;
  for (const id of [left, right]) {
    if (id === null) continue;
    const entry = state.history.find((h) => h.id === id);
    if (!entry) continue;
    const wrap = document.createElement("div");
    wrap.className = "compare-cell";
    const title = document.createElement("div");
    title.textContent = `#${entry.id} seed=${entry.settings.seed}`;
    const canvas = document.createElement("canvas");
    canvas.width = 260;
    canvas.height = 260;
    wrap.append(title, canvas);
    compareView.appendChild(wrap);
    const motion = await fetchMotion(entry.motionId);
    const p = new Player(canvas);
    p.setMotion(motion);
    p.play();
  }
}

parseButton.addEventListener("click", () => {
  void guard("parsing", async () => {
    state = withDescription(state, descriptionInput.value);
    const parsed = await client.parse(state.description);
    state = withParse(state, parsed);
    renderGraph();
    renderActions();
  });
});

sampleButton.addEventListener("click", () => {
  void guard("sampling local actions", async () => {
    for (let i = 0; i < state.actions.length; i++) {
      const slot = state.actions[i]!;
      const response = await client.sampleActions(slot.description, 3);
      state = withCandidates(state, i, response.candidates);
    }
    renderActions();
  });
});

generateButton.addEventListener("click", () => {
  void guard("generating", async () => {
    state = withRho(state, Number(rhoInput.value));
    state = withSeed(state, Number(seedInput.value));
    const outcome = await composeAndGenerate(client, state);
    state = outcome.state;
    diagView.textContent = JSON.stringify(
      outcome.result.diagnostics, null, 2);
    motionCache.set(outcome.result.motion_id, outcome.motion);
    loadIntoPlayer(outcome.motion);
    renderHistory();
  });
});

playButton.addEventListener("click", () => player.play());
pauseButton.addEventListener("click", () => player.pause());
scrubber.addEventListener("input", () => player.scrub(Number(scrubber.value)));

setStatus(`ready (service: ${apiBase})`);
