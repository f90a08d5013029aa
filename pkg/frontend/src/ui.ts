// The workbench app: ingest panel, edit composer, clarification dialog,
// preview/diff inspector, and trajectory viewer. One active session per
// instance; every state change round-trips to the server (no optimistic UI).

import {
  AlignmentReport,
  ClarificationItem,
  EditResponse,
  GraphDelta,
  SessionState,
  ViolationReport,
  WorkbenchClient,
  WorkbenchError,
} from './api.js';
import { deriveView, groupDelta, outsideInterval, parseTrajectoryCsv } from './state.js';
import { renderSubplots } from './plots.js';

type Elements = {
  status: HTMLElement;
  scriptInput: HTMLTextAreaElement;
  ingestButton: HTMLButtonElement;
  editInput: HTMLTextAreaElement;
  editButton: HTMLButtonElement;
  editError: HTMLElement;
  clarifications: HTMLElement;
  preview: HTMLElement;
  confirmButton: HTMLButtonElement;
  versions: HTMLElement;
  plots: HTMLElement;
  scriptView: HTMLElement;
};

export class WorkbenchApp {
  readonly client: WorkbenchClient;
  private readonly el: Elements;
  private sessionId: string | null = null;
  private lastState: SessionState | null = null;
  private committedTags: string[] = [];
  private proposalsByParameter = new Map<string, [number, number]>();

  constructor(root: HTMLElement, client: WorkbenchClient) {
    this.client = client;
    this.el = buildLayout(root);
    this.el.ingestButton.addEventListener('click', () => void this.onIngest());
    this.el.editButton.addEventListener('click', () => void this.onSubmitEdit());
    this.el.confirmButton.addEventListener('click', () => void this.onConfirm());
    this.el.editInput.addEventListener('input', () => this.refreshEditButton());
    this.render();
  }

  get currentSession(): string | null {
    return this.sessionId;
  }

  private async onIngest(): Promise<void> {
    const script = this.el.scriptInput.value;
    if (!script.trim()) return;
    this.el.ingestButton.disabled = true;
    try {
      const { session_id } = await this.client.createSession();
      this.sessionId = session_id;
      const state = await this.client.ingest(session_id, script);
      this.lastState = state;
      if (state.version_tag) {
        this.committedTags = [state.version_tag];
        await this.showVersion(state.version_tag);
      }
      this.setError('');
    } catch (error) {
      this.reportError(error);
    } finally {
      this.el.ingestButton.disabled = false;
      this.render();
    }
  }

  private async onSubmitEdit(): Promise<void> {
    if (!this.sessionId) return;
    const text = this.el.editInput.value;
    if (!text.trim()) return;
    try {
      const response = await this.client.submitEdit(this.sessionId, text);
      this.setError('');
      this.renderEditResponse(response);
      this.lastState = await this.client.state(this.sessionId);
    } catch (error) {
      this.reportError(error);
    }
    this.render();
  }

  private async onResolve(item: ClarificationItem, answer: { value?: number | string; unit?: string; accept_default?: boolean }): Promise<void> {
    if (!this.sessionId) return;
    try {
      this.lastState = await this.client.resolve(this.sessionId, item.id, answer);
      this.setError('');
    } catch (error) {
      this.reportError(error);
      this.lastState = await this.client.state(this.sessionId);
    }
    this.render();
  }

  private async onConfirm(): Promise<void> {
    if (!this.sessionId) return;
    try {
      const result = await this.client.confirm(this.sessionId);
      this.committedTags.push(result.version);
      this.lastState = await this.client.state(this.sessionId);
      this.setError('');
      this.el.preview.textContent = '';
      this.el.clarifications.textContent = '';
      await this.showVersion(result.version);
    } catch (error) {
      this.reportError(error);
      if (this.sessionId) {
        this.lastState = await this.client.state(this.sessionId);
      }
    }
    this.render();
  }

  async showVersion(tag: string): Promise<void> {
    if (!this.sessionId) return;
    const [manifest, csv, script] = await Promise.all([
      this.client.manifest(this.sessionId, tag).catch(() => null),
      this.client.trajectoryCsv(this.sessionId, tag).catch(() => null),
      this.client.script(this.sessionId, tag).catch(() => null),
    ]);
    if (manifest && csv) {
      renderSubplots(
        this.el.plots,
        manifest,
        parseTrajectoryCsv(csv),
        this.client.trajectoryUrl(this.sessionId, tag),
      );
    } else {
      this.el.plots.textContent = '';
      const empty = document.createElement('p');
      empty.className = 'empty-state';
      empty.textContent = manifest
        ? `version ${tag} has no trajectory artifact yet`
        : `version ${tag} has no plot manifest`;
      this.el.plots.appendChild(empty);
    }
    this.el.scriptView.textContent = script ?? '';
    this.renderVersionList(tag);
  }

  private renderVersionList(active: string): void {
    this.el.versions.textContent = '';
    for (const tag of this.committedTags) {
      const button = document.createElement('button');
      button.textContent = tag;
      button.className = tag === active ? 'version active' : 'version';
      button.addEventListener('click', () => void this.showVersion(tag));
      this.el.versions.appendChild(button);
    }
  }

  private renderEditResponse(response: EditResponse): void {
    if (response.status === 'clarifications') {
      this.el.preview.textContent = '';
      return;
    }
    this.renderPreview(response.delta, response.alignment, response.report);
  }

  private renderPreview(delta: GraphDelta, alignment: AlignmentReport, report: ViolationReport): void {
    const panel = this.el.preview;
    panel.textContent = '';
    const groups = groupDelta(delta);

    const heading = document.createElement('h3');
    heading.textContent = 'preview';
    panel.appendChild(heading);

    for (const [label, entries] of [
      ['added', groups.added],
      ['removed', groups.removed],
      ['changed', groups.modified],
    ] as const) {
      if (!entries.length) continue;
      const section = document.createElement('div');
      section.className = `delta-${label}`;
      const title = document.createElement('strong');
      title.textContent = `${label} (${entries.length})`;
      section.appendChild(title);
      const list = document.createElement('ul');
      for (const entry of entries) {
        const li = document.createElement('li');
        li.textContent = `${entry.kind} ${entry.id}`;
        list.appendChild(li);
      }
      section.appendChild(list);
      panel.appendChild(section);
    }

    this.proposalsByParameter.clear();
    if (alignment.proposals.length) {
      const title = document.createElement('strong');
      title.textContent = 'alignment proposals';
      panel.appendChild(title);
      const list = document.createElement('ul');
      list.className = 'proposals';
      for (const proposal of alignment.proposals) {
        this.proposalsByParameter.set(proposal.parameter, proposal.interval);
        const li = document.createElement('li');
        li.textContent =
          `${proposal.parameter} = ${proposal.value} ${proposal.unit} ` +
          `(interval [${proposal.interval[0]}, ${proposal.interval[1]}] ${proposal.unit}, ` +
          `prior ${proposal.source_prior})`;
        list.appendChild(li);
      }
      panel.appendChild(list);
    }

    const eps = document.createElement('p');
    eps.className = 'epsilon';
    eps.textContent = `validation epsilon: ${report.epsilon}`;
    panel.appendChild(eps);
  }

  private renderClarifications(): void {
    const panel = this.el.clarifications;
    panel.textContent = '';
    if (!this.lastState || this.lastState.items.length === 0) return;

    const heading = document.createElement('h3');
    heading.textContent = 'clarifications';
    panel.appendChild(heading);

    for (const item of this.lastState.items) {
      const row = document.createElement('div');
      row.className = `clarification ${item.status}`;
      row.dataset.itemId = item.id;

      const question = document.createElement('span');
      question.className = 'question';
      question.textContent = `${item.id}: ${item.question}`;
      row.appendChild(question);

      if (item.status !== 'open') {
        const badge = document.createElement('span');
        badge.className = 'status-badge';
        badge.textContent =
          `${item.status}: ${item.resolved_value ?? ''} ${item.resolved_unit ?? ''}`.trim();
        row.appendChild(badge);
        panel.appendChild(row);
        continue;
      }

      if (item.default) {
        const acceptButton = document.createElement('button');
        acceptButton.className = 'accept-default';
        acceptButton.textContent = `accept default ${item.default[0]} ${item.default[1] ?? ''}`.trim();
        acceptButton.addEventListener('click', () =>
          void this.onResolve(item, { accept_default: true }),
        );
        row.appendChild(acceptButton);
        if (item.source_prior) {
          const prior = document.createElement('span');
          prior.className = 'prior-note';
          prior.textContent = `from ${item.source_prior}`;
          row.appendChild(prior);
        }
      }

      const valueInput = document.createElement('input');
      valueInput.className = 'override-value';
      valueInput.placeholder = 'override value';
      row.appendChild(valueInput);
      const unitInput = document.createElement('input');
      unitInput.className = 'override-unit';
      unitInput.placeholder = 'unit';
      row.appendChild(unitInput);
      const warn = document.createElement('span');
      warn.className = 'range-warning';
      row.appendChild(warn);

      const checkRange = () => {
        const interval = this.proposalsByParameter.get(item.target[0]);
        const value = Number(valueInput.value);
        if (interval && valueInput.value && Number.isFinite(value) && outsideInterval(value, interval)) {
          warn.textContent = `outside prior interval [${interval[0]}, ${interval[1]}]`;
        } else {
          warn.textContent = '';
        }
      };
      valueInput.addEventListener('input', checkRange);

      const overrideButton = document.createElement('button');
      overrideButton.className = 'override';
      overrideButton.textContent = 'override';
      overrideButton.addEventListener('click', () => {
        const isCompartment = item.target[1] === 'compartment';
        void this.onResolve(item, {
          value: isCompartment ? valueInput.value : Number(valueInput.value),
          unit: unitInput.value || undefined,
        });
      });
      row.appendChild(overrideButton);
      panel.appendChild(row);
    }
  }

  private refreshEditButton(): void {
    const view = this.lastState ? deriveView(this.lastState) : null;
    this.el.editButton.disabled =
      !view || !view.canSubmitEdit || this.el.editInput.value.trim() === '';
  }

  private setError(message: string): void {
    this.el.editError.textContent = message;
  }

  private reportError(error: unknown): void {
    if (error instanceof WorkbenchError) {
      let text = error.payload.message ?? error.message;
      if (error.payload.report) {
        const first = error.payload.report.items[0];
        if (first) {
          text += ` -- ${first.predicate} at ${first.site}: ${first.message}`;
        }
      }
      this.setError(text);
    } else {
      this.setError(String(error));
    }
  }

  private render(): void {
    const view = this.lastState ? deriveView(this.lastState) : null;
    this.el.status.textContent = view ? view.statusLine : 'no session';
    // The commit gate is derived purely from the server's item list + phase.
    this.el.confirmButton.disabled = !view || !view.canConfirm;
    this.refreshEditButton();
    this.renderClarifications();
  }
}

function buildLayout(root: HTMLElement): Elements {
  // class-based hooks only: multiple app instances may share one document
  root.innerHTML = `
    <header>
      <h1>QSP model workbench</h1>
      <p class="status">no session</p>
    </header>
    <main>
      <section class="ingest-panel">
        <h2>1 - ingest model script</h2>
        <textarea class="script-input" rows="8" spellcheck="false"
          placeholder="paste a SimBiology-style model script"></textarea>
        <button class="ingest-button">ingest</button>
      </section>
      <section class="edit-panel">
        <h2>2 - compose edit</h2>
        <textarea class="edit-input" rows="8" spellcheck="false"
          placeholder="one edit per line, e.g. ADD PARAMETER KD1 VALUE ? M"></textarea>
        <button class="edit-button" disabled>submit edit</button>
        <p class="edit-error error" role="alert"></p>
        <div class="clarifications"></div>
        <div class="preview"></div>
        <button class="confirm-button" disabled>confirm commit</button>
      </section>
      <section class="versions-panel">
        <h2>3 - versions</h2>
        <div class="versions"></div>
        <div class="plots"></div>
        <details><summary>generated script</summary><pre class="script-view"></pre></details>
      </section>
    </main>
  `;
  const byClass = <T extends HTMLElement>(name: string): T => {
    const el = root.querySelector<T>(`.${name}`);
    if (!el) throw new Error(`layout element .${name} missing`);
    return el;
  };
  return {
    status: byClass('status'),
    scriptInput: byClass<HTMLTextAreaElement>('script-input'),
    ingestButton: byClass<HTMLButtonElement>('ingest-button'),
    editInput: byClass<HTMLTextAreaElement>('edit-input'),
    editButton: byClass<HTMLButtonElement>('edit-button'),
    editError: byClass('edit-error'),
    clarifications: byClass('clarifications'),
    preview: byClass('preview'),
    confirmButton: byClass<HTMLButtonElement>('confirm-button'),
    versions: byClass('versions'),
    plots: byClass('plots'),
    scriptView: byClass('script-view'),
  };
}
