import { ApiClient, ApiError, OfflineError } from '../api';
import { SessionState } from '../state';
import { MatchedContext, MatchStatus } from '../types';

export type ContextViewFactory = (
  container: HTMLElement,
  ctx: MatchedContext,
  thumbnailB64: string
) => void;

export interface MatchDeps {
  pollIntervalMs?: number;
  maxPollIntervalMs?: number;
  viewFactory?: ContextViewFactory;
}

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

const defaultViewFactory: ContextViewFactory = (container, ctx, thumbnailB64) => {
  // three.js is loaded lazily so the page works (and tests run) without WebGL
  void import('../context3d').then(
    (mod) => mod.createContextView(container, ctx, thumbnailB64),
    () => {
      container.textContent = '3D view unavailable in this browser.';
    }
  );
};

/**
 * 3D matching page: restrict the search to a volume subset, launch a match
 * job, follow its progress by polling, then show the ranked slice table and
 * the matched slice rendered in the context of its volume.
 */
export async function renderMatch(
  root: HTMLElement,
  api: ApiClient,
  session: SessionState,
  deps: MatchDeps = {}
): Promise<void> {
  const pollIntervalMs = deps.pollIntervalMs ?? 1000;
  const maxPollIntervalMs = deps.maxPollIntervalMs ?? 10_000;
  const viewFactory = deps.viewFactory ?? defaultViewFactory;

  root.innerHTML = `
    <section class="match-page">
      <h1>Find a slice in 3D</h1>
      <div class="no-upload-note hidden" data-testid="no-upload-note">
        Upload a slice on the <a href="#/classify">classification page</a> first.
      </div>
      <div class="error-banner hidden" data-testid="error-banner"></div>
      <fieldset class="volume-picker" data-testid="volume-picker">
        <legend>Restrict search to</legend>
        <div data-testid="volume-groups"></div>
      </fieldset>
      <button class="primary" data-testid="start-match">Start matching</button>
      <div class="job-panel hidden" data-testid="job-panel">
        <progress max="100" value="0" data-testid="progress-bar"></progress>
        <span data-testid="job-state"></span>
        <div class="job-error hidden" data-testid="job-error"></div>
      </div>
      <section class="match-results hidden" data-testid="match-results">
        <h2>Best matching slices</h2>
        <table data-testid="results-table">
          <thead>
            <tr><th>Volume</th><th>Axis</th><th>Slice</th><th>Rotation</th>
                <th>Combined</th><th>SSIM</th><th>NCC</th><th>ORB</th></tr>
          </thead>
          <tbody data-testid="results-body"></tbody>
        </table>
        <div class="context-panel">
          <h2>Slice in context</h2>
          <div data-testid="context-summary"></div>
          <div class="context-view" data-testid="context-view"></div>
        </div>
      </section>
    </section>`;

  const $ = <T extends HTMLElement>(id: string) =>
    root.querySelector<T>(`[data-testid="${id}"]`)!;
  const noUploadNote = $('no-upload-note');
  const errorBanner = $('error-banner');
  const volumeGroups = $('volume-groups');
  const startBtn = $<HTMLButtonElement>('start-match');
  const jobPanel = $('job-panel');
  const progressBar = $<HTMLProgressElement>('progress-bar');
  const jobState = $('job-state');
  const jobError = $('job-error');
  const matchResults = $('match-results');
  const resultsBody = $('results-body');
  const contextSummary = $('context-summary');
  const contextView = $('context-view');

  function setError(message: string): void {
    errorBanner.textContent = message;
    errorBanner.classList.remove('hidden');
  }

  if (session.uploadId === null) {
    noUploadNote.classList.remove('hidden');
    startBtn.disabled = true;
  }

  try {
    const volumes = await api.volumes();
    const bySpecies = new Map<string, typeof volumes.volumes>();
    for (const v of volumes.volumes) {
      const group = bySpecies.get(v.species) ?? [];
      group.push(v);
      bySpecies.set(v.species, group);
    }
    for (const species of [...bySpecies.keys()].sort()) {
      const group = document.createElement('div');
      group.className = 'species-group';
      const title = document.createElement('strong');
      title.textContent = species;
      group.appendChild(title);
      for (const v of bySpecies.get(species)!) {
        const label = document.createElement('label');
        const box = document.createElement('input');
        box.type = 'checkbox';
        box.value = v.id;
        box.dataset.testid = 'volume-checkbox';
        box.checked = session.selectedVolumeIds.has(v.id);
        box.addEventListener('change', () => {
          if (box.checked) session.selectedVolumeIds.add(v.id);
          else session.selectedVolumeIds.delete(v.id);
        });
        label.appendChild(box);
        label.appendChild(
          document.createTextNode(` ${v.id} (${v.slice_count} slices)`)
        );
        group.appendChild(label);
      }
      volumeGroups.appendChild(group);
    }
  } catch (err) {
    setError(
      err instanceof OfflineError
        ? 'The analysis API is unreachable. Start the service and reload.'
        : 'Could not load the volume list.'
    );
    startBtn.disabled = true;
  }

  function showProgress(status: MatchStatus): void {
    // clamp to the highest value seen so the bar never moves backwards
    const pct = Math.round(status.progress * 100);
    progressBar.value = Math.max(progressBar.value, pct);
    jobState.textContent = status.state;
  }

  function showResults(status: MatchStatus): void {
    resultsBody.innerHTML = '';
    for (const r of status.results ?? []) {
      const row = document.createElement('tr');
      row.dataset.testid = 'result-row';
      row.dataset.volume = r.volume_id;
      row.innerHTML =
        `<td>${r.volume_id}</td><td>${r.axis}</td><td>${r.slice_index}</td>` +
        `<td>${r.best_rotation.toFixed(1)}°</td>` +
        `<td>${r.combined.toFixed(4)}</td><td>${r.ssim.toFixed(4)}</td>` +
        `<td>${r.ncc.toFixed(4)}</td><td>${r.orb.toFixed(4)}</td>`;
      resultsBody.appendChild(row);
    }
    const ctx = status.matched_context;
    if (ctx) {
      contextSummary.textContent =
        `${ctx.volume_id} (${ctx.species}), axis ${ctx.axis}, ` +
        `slice ${ctx.slice_index} of ${ctx.dims.join('×')}`;
      const thumb = status.results?.[0]?.thumbnail_png_b64 ?? '';
      viewFactory(contextView, ctx, thumb);
    }
    matchResults.classList.remove('hidden');
  }

  async function pollJob(jobId: string): Promise<void> {
    let interval = pollIntervalMs;
    for (;;) {
      await sleep(interval);
      let status: MatchStatus;
      try {
        status = await api.matchStatus(jobId);
        interval = pollIntervalMs;
      } catch (err) {
        if (err instanceof OfflineError) {
          // keep polling with backoff; the job survives brief outages
          interval = Math.min(interval * 2, maxPollIntervalMs);
          continue;
        }
        setError(err instanceof ApiError ? err.message : 'Polling failed.');
        return;
      }
      session.activeJob = status;
      showProgress(status);
      if (status.state === 'done') {
        showResults(status);
        return;
      }
      if (status.state === 'failed') {
        jobError.textContent = `Match failed: ${status.error ?? 'unknown error'}`;
        jobError.classList.remove('hidden');
        return;
      }
    }
  }

  startBtn.addEventListener('click', async () => {
    if (session.uploadId === null) return;
    errorBanner.classList.add('hidden');
    jobError.classList.add('hidden');
    matchResults.classList.add('hidden');
    progressBar.value = 0;
    jobPanel.classList.remove('hidden');
    const selected = [...session.selectedVolumeIds].sort();
    try {
      const handle = await api.startMatch({
        upload_id: session.uploadId,
        candidate_volume_ids: selected.length > 0 ? selected : null,
        top_n: 5,
      });
      jobState.textContent = handle.state;
      await pollJob(handle.job_id);
    } catch (err) {
      if (err instanceof OfflineError) {
        setError('The analysis API is unreachable. Start the service and retry.');
      } else if (err instanceof ApiError) {
        setError(`${err.message}${err.hint ? ` (${err.hint})` : ''}`);
      } else {
        setError('Unexpected error while matching.');
      }
    }
  });
}
