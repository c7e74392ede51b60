/**
 * DOM wiring for the workbench.  Stateless beyond the server session:
 * every transition re-renders from the response, and a reload rebuilds
 * the identical view from GET /session.
 */

import { ApiClient, ApiError, SessionView } from "./api.js";
import {
  buildDiamond,
  candidateRows,
  downloadName,
  MalformedReport,
  traceFrames,
  TraceFrame,
} from "./viewmodel.js";

const DEFAULT_BASE = "http://127.0.0.1:7400";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

class Workbench {
  private api: ApiClient;
  private root: HTMLElement;
  private error: HTMLElement;
  private frames: TraceFrame[] = [];
  private frameIndex = 0;
  private player: number | undefined;

  constructor(root: HTMLElement, baseUrl: string) {
    this.root = root;
    this.api = new ApiClient(baseUrl);
    this.error = el("div", "error-panel");
    this.error.hidden = true;
  }

  async load(): Promise<void> {
    try {
      this.render(await this.api.getSession());
    } catch (err) {
      this.showError(err);
    }
  }

  private showError(err: unknown): void {
    this.error.hidden = false;
    this.error.textContent =
      err instanceof ApiError
        ? `server said ${err.status}: ${err.message}`
        : err instanceof MalformedReport
          ? `malformed report: ${err.message}`
          : String(err);
  }

  private async transition(action: () => Promise<SessionView>): Promise<void> {
    try {
      this.error.hidden = true;
      this.render(await action());
    } catch (err) {
      this.showError(err);
      // 400/409 leave the session untouched; re-sync the view.
      try {
        this.render(await this.api.getSession(), true);
      } catch {
        /* keep the original error visible */
      }
    }
  }

  private render(view: SessionView, keepError = false): void {
    this.root.replaceChildren();
    if (!keepError) this.error.hidden = true;
    this.root.append(this.error);

    const header = el("header");
    header.append(
      el("h1", undefined, `${view.app} — conflict resolution`),
      el(
        "p",
        "meta",
        `round ${view.rounds} · resolved ${view.resolved.length} · flagged ${view.flaggedUnsolvable.length}`,
      ),
    );
    this.root.append(header);

    if (view.done) {
      this.renderSummary(view);
    } else {
      this.renderConflict(view);
    }
    this.renderHistory(view);
    this.renderTraceViewer();
  }

  private renderConflict(view: SessionView): void {
    const report = view.currentConflict;
    const pairId = view.currentPairId;
    if (!report || !pairId) {
      this.showError(new MalformedReport("session is not done but has no current conflict"));
      return;
    }
    let model;
    try {
      model = buildDiamond(report);
    } catch (err) {
      this.showError(err);
      return;
    }

    const section = el("section", "conflict");
    const heading = el("h2", undefined, `conflict: ${model.pairLabel}`);
    if (model.compensationBadge) {
      heading.append(el("span", "badge", "routed to compensation"));
    }
    section.append(heading);
    section.append(
      el("p", "violated", `violates ${model.violated.join(", ") || "(numeric bound)"}`),
    );

    const diamond = el("div", "diamond");
    for (const card of model.cards) {
      const box = el("div", `state-card ${card.key}`);
      box.append(el("h3", undefined, card.title));
      const atoms = el("ul");
      for (const atom of card.trueAtoms) {
        atoms.append(el("li", undefined, atom));
      }
      if (card.trueAtoms.length === 0) atoms.append(el("li", "empty", "(nothing true)"));
      box.append(atoms);
      for (const [name, value] of card.counters) {
        box.append(el("div", "counter", `${name} = ${value}`));
      }
      if (card.changed.length) {
        const delta = el("div", "delta");
        delta.append(el("strong", undefined, "changed: "), document.createTextNode(card.changed.join(", ")));
        box.append(delta);
      }
      diamond.append(box);
    }
    section.append(diamond);

    // Text-table equivalent of the diagram.
    const table = el("table", "diamond-table");
    table.createCaption().textContent = "diamond as text";
    const head = table.createTHead().insertRow();
    for (const title of ["state", "true atoms", "counters", "changed"]) {
      head.append(el("th", undefined, title));
    }
    const body = table.createTBody();
    for (const card of model.cards) {
      const row = body.insertRow();
      row.insertCell().textContent = card.title;
      row.insertCell().textContent = card.trueAtoms.join(", ") || "—";
      row.insertCell().textContent =
        card.counters.map(([n, v]) => `${n}=${v}`).join(", ") || "—";
      row.insertCell().textContent = card.changed.join(", ") || "—";
    }
    section.append(table);

    const list = el("ol", "candidates");
    for (const row of candidateRows(view.candidates)) {
      const item = el("li");
      const button = el("button", "choose", `apply: ${row.label}`);
      button.addEventListener("click", () =>
        this.transition(() => this.api.submitChoice(pairId, row.index)),
      );
      item.append(button);
      const details = el("div", "candidate-details");
      details.append(el("div", undefined, `adds ${row.effects.join("; ")}`));
      if (row.rules.length) {
        details.append(el("div", undefined, `relies on ${row.rules.join(", ")}`));
      }
      if (row.semanticsChanging) {
        details.append(el("div", "badge warn", "semantics-changing"));
      }
      item.append(details);
      list.append(item);
    }
    section.append(el("h3", undefined, "candidate repairs"), list);

    const flag = el("button", "flag", "flag pair as unsolvable");
    flag.addEventListener("click", () =>
      this.transition(() => this.api.submitFlag(pairId)),
    );
    section.append(flag);
    this.root.append(section);
  }

  private renderSummary(view: SessionView): void {
    const section = el("section", "summary");
    section.append(el("h2", undefined, "session complete"));
    const table = el("table", "classes");
    const head = table.createTHead().insertRow();
    for (const title of ["invariant", "class", "outcome"]) {
      head.append(el("th", undefined, title));
    }
    const body = table.createTBody();
    for (const row of view.classTable) {
      const tr = body.insertRow();
      tr.insertCell().textContent = row.invariant;
      tr.insertCell().textContent = row.classTag;
      tr.insertCell().textContent = row.outcome;
    }
    section.append(table);

    if (view.repairedSpec) {
      const blob = new Blob([view.repairedSpec], { type: "text/plain" });
      const link = el("a", "download", `download ${downloadName(view.app)}`);
      link.setAttribute("href", URL.createObjectURL(blob));
      link.setAttribute("download", downloadName(view.app));
      section.append(link);
      const pre = el("pre", "spec-preview");
      pre.textContent = view.repairedSpec;
      section.append(pre);
    }
    this.root.append(section);
  }

  private renderHistory(view: SessionView): void {
    const section = el("section", "history");
    section.append(el("h3", undefined, "resolved"));
    const resolved = el("ul");
    for (const r of view.resolved) {
      resolved.append(
        el("li", undefined, `round ${r.round}: ${r.candidate.resolutionMeaning}`),
      );
    }
    if (!view.resolved.length) resolved.append(el("li", "empty", "none yet"));
    section.append(resolved);

    section.append(el("h3", undefined, "flagged"));
    const flagged = el("ul");
    for (const f of view.flaggedUnsolvable) {
      flagged.append(
        el("li", undefined, `${f.pair.join(" | ")} (${f.reason.join(", ")})`),
      );
    }
    if (!view.flaggedUnsolvable.length) flagged.append(el("li", "empty", "none"));
    section.append(flagged);
    this.root.append(section);
  }

  private renderTraceViewer(): void {
    const section = el("section", "trace");
    section.append(el("h3", undefined, "schedule trace viewer"));
    const input = el("input") as HTMLInputElement;
    input.placeholder = "schedule id (seed)";
    const load = el("button", undefined, "load trace");
    const status = el("div", "trace-status");
    const list = el("ol", "trace-frames");
    const prev = el("button", undefined, "⟨ prev");
    const next = el("button", undefined, "next ⟩");
    const play = el("button", undefined, "play");

    const show = () => {
      list.replaceChildren();
      this.frames.forEach((frame, i) => {
        const item = el(
          "li",
          i === this.frameIndex ? "frame current" : "frame",
          `#${frame.step} ${frame.label}`,
        );
        list.append(item);
      });
      status.textContent = this.frames.length
        ? `frame ${this.frameIndex + 1} / ${this.frames.length}`
        : "no trace loaded";
    };
    load.addEventListener("click", async () => {
      try {
        const events = await this.api.getTrace(input.value.trim());
        this.frames = traceFrames(events);
        this.frameIndex = 0;
        show();
      } catch (err) {
        this.showError(err);
      }
    });
    prev.addEventListener("click", () => {
      this.frameIndex = Math.max(0, this.frameIndex - 1);
      show();
    });
    next.addEventListener("click", () => {
      this.frameIndex = Math.min(this.frames.length - 1, this.frameIndex + 1);
      show();
    });
    play.addEventListener("click", () => {
      if (this.player !== undefined) {
        clearInterval(this.player);
        this.player = undefined;
        play.textContent = "play";
        return;
      }
      play.textContent = "stop";
      this.player = setInterval(() => {
        if (this.frameIndex >= this.frames.length - 1) {
          clearInterval(this.player);
          this.player = undefined;
          play.textContent = "play";
          return;
        }
        this.frameIndex += 1;
        show();
      }, 400) as unknown as number;
    });

    section.append(input, load, prev, next, play, status, list);
    this.root.append(section);
    show();
  }
}

function baseUrl(): string {
  const params = new URLSearchParams(window.location.search);
  return params.get("api") ?? DEFAULT_BASE;
}

const root = document.getElementById("workbench");
if (root) {
  new Workbench(root, baseUrl()).load();
}
