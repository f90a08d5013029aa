// Pure view derivations. Rendered state always derives from the last server
// response; nothing here mutates or recomputes model values.

import type { ClarificationItem, GraphDelta, SessionState, VertexRecord } from './api.js';

export type SessionView = {
  phase: string;
  versionTag: string | null;
  openItems: ClarificationItem[];
  settledItems: ClarificationItem[];
  canSubmitEdit: boolean;
  canConfirm: boolean;
  statusLine: string;
};

export function deriveView(state: SessionState): SessionView {
  const openItems = state.items.filter((item) => item.status === 'open');
  const settledItems = state.items.filter((item) => item.status !== 'open');
  // The confirm gate: server phase must be awaiting_confirmation AND no item
  // may be open. The server enforces this regardless; the button only ever
  // reflects it.
  const canConfirm = state.phase === 'awaiting_confirmation' && openItems.length === 0;
  return {
    phase: state.phase,
    versionTag: state.version_tag,
    openItems,
    settledItems,
    canSubmitEdit: state.phase === 'action',
    canConfirm,
    statusLine:
      `phase: ${state.phase}` +
      (state.version_tag ? ` | version: ${state.version_tag}` : '') +
      (openItems.length ? ` | open clarifications: ${openItems.length}` : ''),
  };
}

export type DeltaGroups = {
  added: Array<{ id: string; kind: string }>;
  removed: Array<{ id: string; kind: string }>;
  modified: Array<{ id: string; kind: string }>;
};

export function groupDelta(delta: GraphDelta): DeltaGroups {
  const entry = (id: string, record: VertexRecord) => ({
    id: id.includes(':') ? id.split(':', 2)[1] : id,
    kind: record.kind,
  });
  const byKindThenId = (a: { id: string; kind: string }, b: { id: string; kind: string }) =>
    a.kind === b.kind ? a.id.localeCompare(b.id) : a.kind.localeCompare(b.kind);
  return {
    added: Object.entries(delta.added_vertices)
      .map(([id, rec]) => entry(id, rec))
      .sort(byKindThenId),
    removed: Object.entries(delta.removed_vertices)
      .map(([id, rec]) => entry(id, rec))
      .sort(byKindThenId),
    modified: Object.entries(delta.modified_vertices)
      .map(([id, pair]) => entry(id, pair[1]))
      .sort(byKindThenId),
  };
}

export type Trajectory = {
  times: number[];
  series: Map<string, number[]>;
};

export function parseTrajectoryCsv(text: string): Trajectory {
  const lines = text.trim().split('\n');
  if (lines.length < 2) {
    return { times: [], series: new Map() };
  }
  const header = lines[0].split(',');
  const species = header.slice(1);
  const times: number[] = [];
  const columns = species.map(() => [] as number[]);
  for (const line of lines.slice(1)) {
    const cells = line.split(',');
    times.push(Number(cells[0]));
    for (let i = 0; i < species.length; i += 1) {
      columns[i].push(Number(cells[i + 1]));
    }
  }
  const series = new Map<string, number[]>();
  species.forEach((name, i) => series.set(name, columns[i]));
  return { times, series };
}

// Whether an override value sits inside a proposal's prior interval; used
// only to decorate the input with a warning badge (the value itself is sent
// to the server verbatim either way).
export function outsideInterval(value: number, interval: [number, number]): boolean {
  return !(value >= interval[0] && value <= interval[1]);
}
