// Single-page annotation workflow: pending queue with progress, per-task
// candidate picker, epoch advance, and the metrics panel. All state lives on
// the server; the page re-renders from GET /api/state + /api/tasks after
// every mutation and on a steady poll.

import {
  advanceEpoch,
  getPendingTasks,
  getState,
  getTask,
  ServerState,
  submitAnnotation,
  TaskView,
} from "./api.js";
import { renderChart } from "./chart.js";
import {
  canAdvance,
  chartSeries,
  formatError,
  formatRecall,
  progressLabel,
  runFinished,
} from "./state.js";

const POLL_MS = 5000;

const el = (id: string) => document.getElementById(id) as HTMLElement;

let busy = false;

function setBanner(message: string | null): void {
  const banner = el("banner");
  if (message === null) {
    banner.hidden = true;
    return;
  }
  banner.hidden = false;
  banner.textContent = message;
}

function retryButton(parent: HTMLElement): void {
  const btn = document.createElement("button");
  btn.textContent = "Retry";
  btn.onclick = () => void refresh();
  parent.appendChild(btn);
}

async function renderTaskDetail(taskId: string): Promise<void> {
  const detail = el("task-detail");
  detail.innerHTML = "<p>Loading candidates...</p>";
  try {
    const task = await getTask(taskId);
    detail.innerHTML = "";
    const head = document.createElement("h3");
    head.textContent = `Find the counterpart for ${task.queried_id}`;
    detail.appendChild(head);
    if (task.display_uri) {
      const link = document.createElement("a");
      link.href = task.display_uri;
      link.textContent = "open item";
      link.target = "_blank";
      detail.appendChild(link);
    }
    const list = document.createElement("ul");
    list.className = "candidates";
    for (const cand of task.candidates ?? []) {
      const row = document.createElement("li");
      const btn = document.createElement("button");
      btn.textContent = `${cand.text_id}  (similarity ${cand.similarity.toFixed(3)})`;
      btn.onclick = () => void submit(task, cand.text_id);
      row.appendChild(btn);
      list.appendChild(row);
    }
    detail.appendChild(list);
  } catch (err) {
    detail.innerHTML = "";
    setBanner(formatError(err));
    retryButton(detail);
  }
}

async function submit(task: TaskView, textId: string): Promise<void> {
  if (busy) return;
  busy = true;
  try {
    await submitAnnotation(task.task_id, { text_id: textId });
    setBanner(null);
    el("task-detail").innerHTML = "<p>Submitted.</p>";
  } catch (err) {
    setBanner(formatError(err));
  } finally {
    busy = false;
    await refresh();
  }
}

function renderQueue(tasks: TaskView[]): void {
  const queue = el("queue");
  queue.innerHTML = "";
  if (tasks.length === 0) {
    queue.innerHTML = "<p class='placeholder'>No pending tasks.</p>";
    return;
  }
  for (const task of tasks) {
    const row = document.createElement("li");
    const btn = document.createElement("button");
    btn.textContent = task.queried_id;
    btn.onclick = () => void renderTaskDetail(task.task_id);
    row.appendChild(btn);
    queue.appendChild(row);
  }
}

function renderMetrics(state: ServerState): void {
  const panel = el("metrics");
  const series = chartSeries(state.history.slice(1));
  panel.innerHTML = renderChart(series.text, series.image);
  const latest = state.history[state.history.length - 1];
  if (latest) {
    const label = document.createElement("p");
    const k = "1" in latest.r_at_k_text ? "1" : Object.keys(latest.r_at_k_text)[0];
    label.textContent =
      `epoch ${latest.epoch}: text R@${k} ${formatRecall(latest.r_at_k_text[k])}, ` +
      `image R@${k} ${formatRecall(latest.r_at_k_image[k])}, ` +
      `paired ${formatRecall(latest.paired_fraction)}%`;
    panel.appendChild(label);
  }
}

async function refresh(): Promise<void> {
  try {
    const state = await getState();
    el("progress").textContent = runFinished(state)
      ? `run complete after epoch ${state.epoch}`
      : `epoch ${state.epoch}: ${progressLabel(state)} annotated`;
    const advance = el("advance") as HTMLButtonElement;
    advance.disabled = !canAdvance(state);
    renderMetrics(state);
    renderQueue(runFinished(state) ? [] : await getPendingTasks());
    setBanner(null);
  } catch (err) {
    setBanner(formatError(err));
  }
}

async function onAdvance(): Promise<void> {
  if (busy) return;
  busy = true;
  try {
    const result = await advanceEpoch();
    setBanner(null);
    el("task-detail").innerHTML = `<p>Epoch ${result.epoch} trained and evaluated.</p>`;
  } catch (err) {
    setBanner(formatError(err));
  } finally {
    busy = false;
    await refresh();
  }
}

export function start(): void {
  (el("advance") as HTMLButtonElement).onclick = () => void onAdvance();
  window.addEventListener("focus", () => void refresh());
  setInterval(() => void refresh(), POLL_MS);
  void refresh();
}

start();
