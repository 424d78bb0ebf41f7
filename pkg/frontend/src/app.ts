/**
 * App shell: hash routing, form wiring, and the poll loop.  All rendering
 * goes through the pure functions in render.ts; all data comes from api.ts.
 */

import { ApiClient, validateUploadNames, type MethodInfo } from "./api.js";
import {
  INITIAL_POLL,
  jobRows,
  paramFields,
  pollDone,
  pollFailed,
  pollSucceeded,
  resultView,
  type PollState,
} from "./state.js";
import {
  renderErrorBanner,
  renderJobTable,
  renderMethodOptions,
  renderParamsPanel,
  renderResultPage,
  renderStaleNotice,
} from "./render.js";

const api = new ApiClient("");
let methodsCatalog: MethodInfo[] = [];
let jobListTimer: number | undefined;
let pollTimer: number | undefined;

function el(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node;
}

function showError(target: HTMLElement, message: string): void {
  target.innerHTML = renderErrorBanner(message);
}

function toast(message: string): void {
  const node = el("toast");
  node.textContent = message;
  node.classList.add("visible");
  window.setTimeout(() => node.classList.remove("visible"), 4000);
}

// --- upload page ---

function fileOf(inputId: string): File | undefined {
  const input = el(inputId) as HTMLInputElement;
  return input.files?.[0];
}

async function onUpload(event: Event): Promise<void> {
  event.preventDefault();
  const status = el("upload-status");
  const corpus = fileOf("corpus-file");
  const queries = fileOf("queries-file");
  const qrels = fileOf("qrels-file");
  const problems = validateUploadNames({
    corpus: corpus?.name,
    queries: queries?.name,
    qrels: qrels?.name,
  });
  if (problems.length > 0) {
    showError(status, problems.join("; "));
    return;
  }
  status.textContent = "Uploading...";
  try {
    const body = await api.uploadCollection(
      { corpus: corpus!, queries, qrels },
      (el("collection-name") as HTMLInputElement).value,
    );
    status.textContent = `Collection ${body.collection_id} uploaded.`;
    await refreshCollections(body.collection_id);
  } catch (err) {
    showError(status, String(err instanceof Error ? err.message : err));
  }
}

async function refreshCollections(selected = ""): Promise<void> {
  const select = el("collection-select") as HTMLSelectElement;
  const collections = await api.listCollections();
  select.innerHTML = collections
    .map((c) => {
      const sel = c.id === selected ? " selected" : "";
      return `<option value="${c.id}"${sel}>${c.name} (${c.n_docs} docs, ${c.n_queries} queries)</option>`;
    })
    .join("");
}

// --- job creation ---

function onMethodChange(): void {
  const method = (el("method-select") as HTMLSelectElement).value;
  el("params-panel").innerHTML = renderParamsPanel(paramFields(methodsCatalog, method));
  const info = methodsCatalog.find((m) => m.method === method);
  el("method-hint").textContent = info ? info.description : "";
  (el("submit-job") as HTMLButtonElement).disabled = !method;
}

function collectParams(): Record<string, unknown> {
  const params: Record<string, unknown> = {};
  el("params-panel")
    .querySelectorAll("input")
    .forEach((input) => {
      const raw = (input as HTMLInputElement).value.trim();
      if (!raw) return;
      const name = (input as HTMLInputElement).name;
      if (raw === "true" || raw === "false") params[name] = raw === "true";
      else if (/^-?\d+$/.test(raw)) params[name] = parseInt(raw, 10);
      else params[name] = raw;
    });
  return params;
}

async function onCreateJob(event: Event): Promise<void> {
  event.preventDefault();
  const status = el("job-status");
  const collectionId = (el("collection-select") as HTMLSelectElement).value;
  const method = (el("method-select") as HTMLSelectElement).value;
  if (!collectionId || !method) {
    showError(status, "pick a collection and a method first");
    return;
  }
  try {
    const job = await api.createJob(collectionId, method, collectParams());
    window.location.hash = `#/jobs/${job.id}`;
  } catch (err) {
    showError(status, String(err instanceof Error ? err.message : err));
  }
}

// --- job list page ---

async function refreshJobs(): Promise<void> {
  try {
    const jobs = await api.listJobs();
    el("job-table").innerHTML = renderJobTable(jobRows(jobs));
  } catch (err) {
    showError(el("job-table"), String(err instanceof Error ? err.message : err));
  }
}

// --- result page with polling ---

async function showJob(jobId: string): Promise<void> {
  const container = el("result-container");
  let poll: PollState = INITIAL_POLL;
  let fetchedResult = false;

  const tick = async (): Promise<void> => {
    try {
      const job = await api.getJob(jobId);
      poll = pollSucceeded(poll, job);
      let result = null;
      if (job.state === "FINISHED" && !fetchedResult) {
        result = await api.getResult(jobId);
        fetchedResult = true;
        container.dataset.result = JSON.stringify(result);
      } else if (container.dataset.result) {
        result = JSON.parse(container.dataset.result);
      }
      container.innerHTML =
        renderStaleNotice(poll.stale) + renderResultPage(resultView(job, result, methodsCatalog));
      bindDownloadButtons(container);
    } catch {
      poll = pollFailed(poll);
      const notice = renderStaleNotice(poll.stale) || renderErrorBanner("cannot reach the service");
      container.innerHTML = notice + (container.dataset.lastPage ?? "");
    }
    if (!pollDone(poll)) {
      pollTimer = window.setTimeout(tick, poll.nextDelayMs);
    }
  };
  await tick();
}

function bindDownloadButtons(container: HTMLElement): void {
  container.querySelectorAll("button.download").forEach((button) => {
    button.addEventListener("click", () => {
      const model = (button as HTMLButtonElement).dataset.model!;
      const link = document.createElement("a");
      link.href = api.bundleUrl(model);
      link.download = `${model}_bundle.zip`;
      document.body.appendChild(link);
      link.click();
      link.remove();
      void fetch(api.bundleUrl(model), { method: "HEAD" }).then((resp) => {
        if (!resp.ok) toast(`bundle download failed: HTTP ${resp.status}`);
      });
    });
  });
}

// --- routing ---

function route(): void {
  if (pollTimer) window.clearTimeout(pollTimer);
  const hash = window.location.hash || "#/";
  const jobMatch = hash.match(/^#\/jobs\/(.+)$/);
  el("page-home").hidden = jobMatch !== null;
  el("page-result").hidden = jobMatch === null;
  if (jobMatch) {
    void showJob(jobMatch[1]);
  } else {
    void refreshJobs();
  }
}

async function boot(): Promise<void> {
  methodsCatalog = await api.listMethods();
  (el("method-select") as HTMLSelectElement).innerHTML =
    `<option value="">choose a method</option>` + renderMethodOptions(methodsCatalog);
  el("method-select").addEventListener("change", onMethodChange);
  el("upload-form").addEventListener("submit", onUpload);
  el("job-form").addEventListener("submit", onCreateJob);
  (el("submit-job") as HTMLButtonElement).disabled = true;
  await refreshCollections();
  window.addEventListener("hashchange", route);
  route();
  jobListTimer = window.setInterval(() => {
    if (!window.location.hash.startsWith("#/jobs/")) void refreshJobs();
  }, 2000);
  void jobListTimer;
}

window.addEventListener("DOMContentLoaded", () => {
  void boot();
});
