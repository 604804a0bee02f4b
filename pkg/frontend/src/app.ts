/**
 * Annotation workbench controller.
 *
 * One task at a time: the image reference, the prompt, and one pane per
 * candidate response. Selecting text in a pane tags it with the active
 * category (keys 1-4 switch categories); clicking a labeled span removes it;
 * unlabeled text stays implicitly accurate. Submit posts every pane's spans;
 * a 400 shows the server's violations inline without advancing, a success
 * loads the next pending task. Drafts live in memory until the server accepts
 * them, so a failed request loses nothing.
 */

import { ApiClient, SubmitConflict, SubmitRejected, TaskDetail } from "./api";
import { pointLength, rangeToUnitOffsets, unitToPoint } from "./offsets";
import { CATEGORIES, CategoryLabel, Span, addSpan, removeSpanAt } from "./spans";
import { renderPane, renderViolations } from "./render";

export class Workbench {
  readonly api: ApiClient;
  private root: HTMLElement;
  private task: TaskDetail | null = null;
  private drafts: Span[][] = [];
  private activeCategory: CategoryLabel = "inaccurate";
  private panes: HTMLElement[] = [];

  constructor(root: HTMLElement, api: ApiClient = new ApiClient()) {
    this.root = root;
    this.api = api;
  }

  // ------------------------------------------------------------------
  // state accessors (used by the UI and by tests)
  // ------------------------------------------------------------------

  get currentTask(): TaskDetail | null {
    return this.task;
  }

  get category(): CategoryLabel {
    return this.activeCategory;
  }

  spansOf(paneIndex: number): Span[] {
    return this.drafts[paneIndex] ?? [];
  }

  setCategory(label: CategoryLabel): void {
    this.activeCategory = label;
    for (const button of this.root.querySelectorAll<HTMLElement>(".category")) {
      button.classList.toggle("active", button.dataset.label === label);
    }
  }

  // ------------------------------------------------------------------
  // lifecycle
  // ------------------------------------------------------------------

  async start(): Promise<void> {
    this.installKeyboardShortcuts();
    await this.loadNextPending();
  }

  async loadNextPending(): Promise<void> {
    let pending;
    try {
      pending = await this.api.pendingTasks();
    } catch (err) {
      this.showBanner(`Could not reach the backend: ${String(err)}. Retry when it is up.`, true);
      return;
    }
    if (pending.length === 0) {
      this.renderAllDone();
      return;
    }
    await this.loadTask(pending[0].task_id);
  }

  async loadTask(taskId: string): Promise<void> {
    const task = await this.api.task(taskId);
    this.task = task;
    this.drafts = task.responses.map((_, i) => task.annotations?.[i]?.slice() ?? []);
    this.renderTask();
  }

  // ------------------------------------------------------------------
  // span editing
  // ------------------------------------------------------------------

  /** Tag [startPoint, endPoint) of a pane with the active category. */
  applySpan(paneIndex: number, startPoint: number, endPoint: number): string | null {
    const result = addSpan(this.drafts[paneIndex], {
      start: startPoint,
      end: endPoint,
      label: this.activeCategory,
    });
    if (!result.ok) {
      this.showBanner(result.reason, true);
      return result.reason;
    }
    this.drafts[paneIndex] = result.spans;
    this.refreshPane(paneIndex);
    this.showBanner("", false);
    return null;
  }

  removeSpan(paneIndex: number, startPoint: number): void {
    this.drafts[paneIndex] = removeSpanAt(this.drafts[paneIndex], startPoint);
    this.refreshPane(paneIndex);
  }

  /** Translate the current DOM selection inside a pane into a span. */
  handleSelection(paneIndex: number): void {
    const doc = this.root.ownerDocument;
    const selection = doc.defaultView?.getSelection();
    if (!selection || selection.rangeCount === 0 || selection.isCollapsed) {
      return;
    }
    const pane = this.panes[paneIndex];
    const offsets = rangeToUnitOffsets(pane, selection.getRangeAt(0));
    if (!offsets) {
      return;
    }
    const text = this.task!.responses[paneIndex];
    this.applySpan(paneIndex, unitToPoint(text, offsets.start), unitToPoint(text, offsets.end));
    selection.removeAllRanges();
  }

  // ------------------------------------------------------------------
  // submission
  // ------------------------------------------------------------------

  async submit(overwrite = false): Promise<void> {
    if (!this.task) {
      return;
    }
    try {
      await this.api.submit(this.task.task_id, this.drafts, overwrite);
    } catch (err) {
      if (err instanceof SubmitRejected) {
        renderViolations(
          this.root.querySelector<HTMLElement>(".violations")!,
          err.violations.map((v) => `response ${v.response_index + 1}: [${v.code}] ${v.message}`),
        );
        return;
      }
      if (err instanceof SubmitConflict) {
        this.showBanner(
          "This task was already annotated elsewhere. Submit again to overwrite.",
          true,
        );
        this.root.querySelector<HTMLButtonElement>(".submit")!.onclick = () => this.submit(true);
        return;
      }
      this.showBanner(`Network failure: ${String(err)}. Your draft is kept; retry.`, true);
      return;
    }
    renderViolations(this.root.querySelector<HTMLElement>(".violations")!, []);
    await this.loadNextPending();
  }

  // ------------------------------------------------------------------
  // rendering
  // ------------------------------------------------------------------

  private refreshPane(paneIndex: number): void {
    const text = this.task!.responses[paneIndex];
    renderPane(this.panes[paneIndex], text, this.drafts[paneIndex], pointLength(text));
  }

  private renderTask(): void {
    const doc = this.root.ownerDocument;
    this.root.textContent = "";
    const task = this.task!;

    const header = doc.createElement("header");
    const image = doc.createElement("div");
    image.className = "image-ref";
    if (/^https?:/.test(task.image_ref)) {
      const img = doc.createElement("img");
      img.src = task.image_ref;
      img.alt = task.image_ref;
      image.appendChild(img);
    } else {
      image.textContent = `image: ${task.image_ref}`;
    }
    const prompt = doc.createElement("p");
    prompt.className = "prompt";
    prompt.textContent = task.prompt;
    header.append(image, prompt);

    const categories = doc.createElement("div");
    categories.className = "categories";
    CATEGORIES.forEach((label, i) => {
      const button = doc.createElement("button");
      button.className = "category";
      button.dataset.label = label;
      button.textContent = `${i + 1} ${label}`;
      button.addEventListener("click", () => this.setCategory(label));
      categories.appendChild(button);
    });

    const banner = doc.createElement("div");
    banner.className = "banner";
    banner.hidden = true;

    const violations = doc.createElement("div");
    violations.className = "violations";
    violations.hidden = true;

    const panesBox = doc.createElement("div");
    panesBox.className = "panes";
    this.panes = task.responses.map((_, i) => {
      const wrap = doc.createElement("section");
      wrap.className = "pane-wrap";
      const title = doc.createElement("h3");
      title.textContent = `Response ${i + 1}`;
      const pane = doc.createElement("div");
      pane.className = "pane";
      pane.dataset.pane = String(i);
      pane.addEventListener("mouseup", () => this.handleSelection(i));
      pane.addEventListener("click", (event) => {
        const target = event.target as HTMLElement;
        if (target.dataset.labeled === "true") {
          this.removeSpan(i, Number(target.dataset.start));
        }
      });
      wrap.append(title, pane);
      panesBox.appendChild(wrap);
      return pane;
    });

    const submit = doc.createElement("button");
    submit.className = "submit";
    submit.textContent = "Submit annotations";
    submit.addEventListener("click", () => this.submit());

    this.root.append(header, categories, banner, violations, panesBox, submit);
    task.responses.forEach((_, i) => this.refreshPane(i));
    this.setCategory(this.activeCategory);
  }

  private renderAllDone(): void {
    this.task = null;
    this.root.textContent = "";
    const done = this.root.ownerDocument.createElement("p");
    done.className = "all-done";
    done.textContent = "All tasks are annotated. Export the corpus from /api/export.";
    this.root.appendChild(done);
  }

  private showBanner(message: string, visible: boolean): void {
    const banner = this.root.querySelector<HTMLElement>(".banner");
    if (banner) {
      banner.textContent = message;
      banner.hidden = !visible || message === "";
    }
  }

  private installKeyboardShortcuts(): void {
    this.root.ownerDocument.addEventListener("keydown", (event) => {
      const index = Number(event.key) - 1;
      if (index >= 0 && index < CATEGORIES.length && !event.ctrlKey && !event.metaKey) {
        this.setCategory(CATEGORIES[index]);
      }
    });
  }
}
