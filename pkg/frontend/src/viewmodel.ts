/**
 * Pure view-model builders: everything the DOM layer renders is computed
 * here from API payloads, so the interesting logic is unit-testable
 * without a browser.
 */

import type { Candidate, ConflictReport, StateSnapshot, TraceEvent } from "./api.js";

export class MalformedReport extends Error {}

export interface StateCard {
  key: "initial" | "afterA" | "afterB" | "merged";
  title: string;
  trueAtoms: string[];
  counters: [string, number][];
  /** Atoms/counters highlighted because this card differs from the initial state. */
  changed: string[];
}

export interface DiamondModel {
  opA: string;
  opB: string;
  pairLabel: string;
  cards: StateCard[];
  violated: string[];
  compensationBadge: boolean;
}

function describeBound(op: { name: string; args: Record<string, string> }): string {
  const args = Object.values(op.args).join(", ");
  return `${op.name}(${args})`;
}

function stateDiff(base: StateSnapshot, next: StateSnapshot): string[] {
  const before = new Set(base.true);
  const after = new Set(next.true);
  const changed: string[] = [];
  for (const atom of next.true) {
    if (!before.has(atom)) changed.push(`+${atom}`);
  }
  for (const atom of base.true) {
    if (!after.has(atom)) changed.push(`-${atom}`);
  }
  const baseCounters = base.counters ?? {};
  const nextCounters = next.counters ?? {};
  const keys = new Set([...Object.keys(baseCounters), ...Object.keys(nextCounters)]);
  for (const key of [...keys].sort()) {
    const from = baseCounters[key] ?? 0;
    const to = nextCounters[key] ?? 0;
    if (from !== to) changed.push(`${key}: ${from} -> ${to}`);
  }
  return changed;
}

function card(
  key: StateCard["key"],
  title: string,
  state: StateSnapshot,
  base: StateSnapshot | null,
): StateCard {
  return {
    key,
    title,
    trueAtoms: [...state.true].sort(),
    counters: Object.entries(state.counters ?? {}).sort(),
    changed: base ? stateDiff(base, state) : [],
  };
}

/** Validate a report and lay out its four-state diamond. */
export function buildDiamond(report: ConflictReport): DiamondModel {
  for (const field of ["initialState", "stateAfterA", "stateAfterB", "mergedState"] as const) {
    const state = report[field];
    if (!state || !Array.isArray(state.true)) {
      throw new MalformedReport(`conflict report is missing ${field}`);
    }
  }
  if (!Array.isArray(report.violatedClauses)) {
    throw new MalformedReport("conflict report has no violatedClauses");
  }
  if (report.violatedClauses.length === 0 && report.kind === "boolean") {
    throw new MalformedReport("boolean conflict report with empty violatedClauses");
  }
  const a = describeBound(report.opA);
  const b = describeBound(report.opB);
  return {
    opA: a,
    opB: b,
    pairLabel: `${report.opA.name} ∥ ${report.opB.name}`,
    cards: [
      card("initial", "initial state", report.initialState, null),
      card("afterA", `after ${a}`, report.stateAfterA, report.initialState),
      card("afterB", `after ${b}`, report.stateAfterB, report.initialState),
      card("merged", "merged state", report.mergedState, report.initialState),
    ],
    violated: report.violatedClauses,
    compensationBadge:
      report.kind === "compensationRequired" ||
      (report.compensationClauses ?? []).length > 0,
  };
}

export interface CandidateRow {
  index: number;
  label: string;
  effects: string[];
  rules: string[];
  semanticsChanging: boolean;
  isRestore: boolean;
}

function effectLabel(effect: Candidate["addedEffects"][number]): string {
  const value = effect.action === "setTrue" ? "true" : "false";
  return `${effect.pred}(${effect.args.join(", ")}) := ${value}`;
}

export function candidateRows(candidates: Candidate[]): CandidateRow[] {
  return candidates.map((candidate, index) => ({
    index,
    label: candidate.resolutionMeaning,
    effects: candidate.addedEffects.map(effectLabel),
    rules: candidate.requiredRules.map((r) => `${r.pred}: ${r.policy}`),
    semanticsChanging: candidate.semanticsChanging,
    isRestore: candidate.addedEffects.every((e) => e.action === "setTrue"),
  }));
}

/** Pick the index of the restoring candidate, if any (used by tests and
 *  the "prefer restores" shortcut button). */
export function restoreCandidateIndex(candidates: Candidate[]): number | null {
  const rows = candidateRows(candidates);
  const restore = rows.find((row) => row.isRestore);
  return restore ? restore.index : null;
}

export interface TraceFrame {
  step: number;
  label: string;
  kind: string;
  replica: string;
}

/** Flatten trace events into animation frames, preserving server order. */
export function traceFrames(events: TraceEvent[]): TraceFrame[] {
  return events.map((event) => {
    const replica = event.replica ?? "?";
    let label: string;
    switch (event.event) {
      case "submit":
        label = `${replica} submits ${event.record?.op ?? event.op ?? "?"}`;
        break;
      case "deliver":
        label = `${replica} receives ${event.record?.op ?? "?"} from ${event.record?.origin ?? "?"}`;
        break;
      case "compensation":
        label = `${replica} commits compensation ${event.record?.op ?? ""}`;
        break;
      case "violation":
        label = `${replica} observes violation of ${event.instance ?? "?"}`;
        break;
      case "preconditionFailure":
        label = `${replica} rejects ${event.op ?? "?"} (precondition)`;
        break;
      default:
        label = `${replica} ${event.event}`;
    }
    return { step: event.step, label, kind: event.event, replica };
  });
}

/** Filename offered when downloading the finished spec. */
export function downloadName(app: string): string {
  return `${app}.repaired.ipa`;
}
