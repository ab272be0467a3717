/**
 * Application shell: owns the selection, issues exactly one API request per
 * user action, and routes payloads to the three views. Orderings, matrices,
 * and weights are always taken from server responses, never recomputed.
 */

import {
  ApiClient,
  ApiError,
  type DiagnosticsPayload,
  type OverviewPayload,
  type RetrainJobPayload,
  type Side,
  type SortKey,
} from "./api.js";
import { renderDecomposition } from "./decomposition.js";
import { renderMainView, updateWeightBars } from "./mainview.js";
import { renderScatterplot } from "./scatterplot.js";
import { LatestWins, initialSelection, seenList, toggleUnseen, unseenList, type Selection } from "./state.js";

const SORT_KEYS: SortKey[] = ["under", "over", "total", "unseen_sum"];
const POLL_MS = 1000;

export class App {
  readonly selection: Selection = initialSelection();
  private overview: OverviewPayload | null = null;
  private diagnostics: DiagnosticsPayload | null = null;
  private readonly diagRequests = new LatestWins();
  private classIndex = new Map<string, number>();
  private retrainRunning = false;
  private hoverToken = 0;

  private readonly els: {
    scatter: HTMLElement;
    main: HTMLElement;
    side: HTMLElement;
    metrics: HTMLElement;
    sort: HTMLSelectElement;
    retrain: HTMLButtonElement;
    jobStatus: HTMLElement;
    toast: HTMLElement;
  };

  constructor(
    root: HTMLElement,
    private readonly api: ApiClient,
  ) {
    root.innerHTML = `
      <header class="topbar">
        <h1>zslens</h1>
        <label class="sort-control">sort
          <select id="sort">${SORT_KEYS.map((k) => `<option value="${k}">${k.replace("_", " ")}</option>`).join("")}</select>
        </label>
        <button id="retrain" type="button">retrain</button>
        <span id="job-status" class="job-status"></span>
      </header>
      <div class="layout">
        <section class="panel" id="scatter-panel">
          <h2>Categories</h2>
          <div id="scatter"></div>
          <div id="metrics" class="metrics"></div>
        </section>
        <section class="panel grow" id="main-panel">
          <h2>Attribute diagnostics</h2>
          <div id="mainview"></div>
        </section>
        <section class="panel" id="side-panel">
          <h2>False positives</h2>
          <div id="decomposition"></div>
        </section>
      </div>
      <div id="toast" class="toast" hidden></div>
    `;
    this.els = {
      scatter: root.querySelector("#scatter") as HTMLElement,
      main: root.querySelector("#mainview") as HTMLElement,
      side: root.querySelector("#decomposition") as HTMLElement,
      metrics: root.querySelector("#metrics") as HTMLElement,
      sort: root.querySelector("#sort") as HTMLSelectElement,
      retrain: root.querySelector("#retrain") as HTMLButtonElement,
      jobStatus: root.querySelector("#job-status") as HTMLElement,
      toast: root.querySelector("#toast") as HTMLElement,
    };
    this.els.sort.value = this.selection.sort;
    this.els.sort.addEventListener("change", () => {
      this.selection.sort = this.els.sort.value as SortKey;
      void this.refreshDiagnostics();
    });
    this.els.retrain.addEventListener("click", () => void this.onRetrainClick());
    this.syncSortOptions();
  }

  async start(): Promise<void> {
    try {
      this.overview = await this.api.overview();
      this.classIndex = new Map(this.overview.classes.map((c) => [c.name, c.index]));
      this.renderScatter();
      renderDecomposition(this.els.side, null, null);
      await this.refreshDiagnostics();
      await this.refreshMetrics();
    } catch (err) {
      this.toast(err);
    }
  }

  private renderScatter(): void {
    if (!this.overview) return;
    renderScatterplot(this.els.scatter, this.overview, this.selection, {
      onBrushSeen: (names) => this.onBrushSeen(names),
      onToggleUnseen: (name) => this.onToggleUnseen(name),
    });
  }

  onBrushSeen(names: string[]): void {
    this.selection.seen = new Set(names);
    this.renderScatter();
    void this.refreshDiagnostics();
  }

  onToggleUnseen(name: string): void {
    toggleUnseen(this.selection, name);
    if (this.selection.unseen.size === 0 && this.selection.sort === "unseen_sum") {
      this.selection.sort = "total";
      this.els.sort.value = "total";
    }
    this.syncSortOptions();
    this.renderScatter();
    void this.refreshDiagnostics();
  }

  /** unseen_sum needs at least one selected unseen class to be well-defined */
  private syncSortOptions(): void {
    const option = this.els.sort.querySelector<HTMLOptionElement>('option[value="unseen_sum"]');
    if (option) option.disabled = this.selection.unseen.size === 0;
  }

  async refreshDiagnostics(): Promise<void> {
    const token = this.diagRequests.next();
    try {
      const payload = await this.api.diagnostics(
        seenList(this.selection),
        unseenList(this.selection),
        this.selection.sort,
      );
      if (!this.diagRequests.isCurrent(token)) return;
      this.diagnostics = payload;
      renderMainView(this.els.main, payload, {
        onBarClick: (attr) => void this.onBarClick(attr),
        onCellHover: (attr, category, side) => void this.onCellHover(attr, category, side),
        onCellLeave: () => renderDecomposition(this.els.side, null, null),
      });
    } catch (err) {
      if (this.diagRequests.isCurrent(token)) this.toast(err);
    }
  }

  async onBarClick(attr: number): Promise<void> {
    try {
      const payload = await this.api.adjustWeight(attr, -0.1);
      if (this.diagnostics) this.diagnostics.weights = payload.weights;
      updateWeightBars(this.els.main, payload.weights);
    } catch (err) {
      this.toast(err);
    }
  }

  async onCellHover(attr: number, category: string, side: Side): Promise<void> {
    const cat = this.classIndex.get(category);
    if (cat === undefined) return;
    const token = ++this.hoverToken;
    try {
      const payload = await this.api.decomposition(attr, cat, side);
      if (token !== this.hoverToken) return;
      renderDecomposition(this.els.side, payload, this.diagnostics?.attributes[attr] ?? null);
    } catch (err) {
      if (token === this.hoverToken) this.toast(err);
    }
  }

  async onRetrainClick(): Promise<void> {
    if (this.retrainRunning) return;
    this.retrainRunning = true;
    this.els.retrain.disabled = true;
    this.els.jobStatus.textContent = "starting";
    try {
      const started = await this.api.startRetrain();
      this.pollRetrain(started.job_id);
    } catch (err) {
      this.retrainRunning = false;
      this.els.retrain.disabled = false;
      this.els.jobStatus.textContent = "";
      this.toast(err);
    }
  }

  private pollRetrain(jobId: number): void {
    setTimeout(() => void this.checkRetrain(jobId), POLL_MS);
  }

  private async checkRetrain(jobId: number): Promise<void> {
    let job: RetrainJobPayload;
    try {
      job = await this.api.retrainStatus(jobId);
    } catch (err) {
      this.retrainRunning = false;
      this.els.retrain.disabled = false;
      this.els.jobStatus.textContent = "";
      this.toast(err);
      return;
    }
    this.els.jobStatus.textContent = job.status;
    if (job.status === "pending" || job.status === "running") {
      this.pollRetrain(jobId);
      return;
    }
    this.retrainRunning = false;
    this.els.retrain.disabled = false;
    if (job.status === "failed") {
      this.toast(new Error(job.error ?? "retrain failed"));
      return;
    }
    this.renderJobMetrics(job);
    await this.refreshDiagnostics();
  }

  private renderJobMetrics(job: RetrainJobPayload): void {
    const before = job.metrics_before;
    const after = job.metrics_after;
    if (!before || !after) return;
    const fmt = (v: number) => `${(100 * v).toFixed(1)}%`;
    let text =
      `retrain: overall ${fmt(before.overall)} to ${fmt(after.overall)}, ` +
      `mean per class ${fmt(before.mean_per_class)} to ${fmt(after.mean_per_class)}`;
    if (job.unseen_before && job.unseen_after) {
      text += `, unseen ${fmt(job.unseen_before.mean_per_class)} to ${fmt(job.unseen_after.mean_per_class)}`;
    }
    this.els.metrics.textContent = text;
  }

  async refreshMetrics(): Promise<void> {
    try {
      const payload = await this.api.metrics();
      const fmt = (v: number) => `${(100 * v).toFixed(1)}%`;
      let text = `holdout: overall ${fmt(payload.diag.overall)}, mean per class ${fmt(payload.diag.mean_per_class)}`;
      if (payload.unseen) text += `; unseen mean per class ${fmt(payload.unseen.mean_per_class)}`;
      this.els.metrics.textContent = text;
    } catch (err) {
      this.toast(err);
    }
  }

  private toast(err: unknown): void {
    const message =
      err instanceof ApiError ? `${err.code}: ${err.message}` : err instanceof Error ? err.message : String(err);
    this.els.toast.textContent = message;
    this.els.toast.hidden = false;
    setTimeout(() => {
      this.els.toast.hidden = true;
    }, 4000);
  }
}

const mount = typeof document !== "undefined" ? document.getElementById("app") : null;
if (mount) {
  const app = new App(mount, new ApiClient());
  void app.start();
}
