import { ApiClient, ApiError, OfflineError } from '../api';
import { debounce } from '../debounce';
import { SessionState } from '../state';
import { CropRect } from '../types';

export interface ClassifyDeps {
  /** quiet period before a slider drag commits a preprocess request */
  debounceMs?: number;
  readFileAsB64?: (file: File) => Promise<string>;
  cropB64?: (b64: string, rect: CropRect) => Promise<string>;
}

function defaultReadFileAsB64(file: File): Promise<string> {
  return new Promise((resolve, reject) => {
    const reader = new FileReader();
    reader.onerror = () => reject(reader.error);
    reader.onload = () => {
      const url = String(reader.result);
      resolve(url.slice(url.indexOf(',') + 1));
    };
    reader.readAsDataURL(file);
  });
}

/** Crop a base64 image to a fractional rectangle using an offscreen canvas. */
function defaultCropB64(b64: string, rect: CropRect): Promise<string> {
  return new Promise((resolve, reject) => {
    const img = new Image();
    img.onerror = () => reject(new Error('could not decode image for cropping'));
    img.onload = () => {
      const sx = Math.round(rect.x * img.naturalWidth);
      const sy = Math.round(rect.y * img.naturalHeight);
      const sw = Math.max(1, Math.round(rect.width * img.naturalWidth));
      const sh = Math.max(1, Math.round(rect.height * img.naturalHeight));
      const canvas = document.createElement('canvas');
      canvas.width = sw;
      canvas.height = sh;
      const ctx = canvas.getContext('2d');
      if (!ctx) {
        reject(new Error('canvas unavailable'));
        return;
      }
      ctx.drawImage(img, sx, sy, sw, sh, 0, 0, sw, sh);
      const url = canvas.toDataURL('image/png');
      resolve(url.slice(url.indexOf(',') + 1));
    };
    img.src = 'data:image/png;base64,' + b64;
  });
}

/**
 * Classification page: drag-and-drop upload, live preprocessing preview with
 * a debounced sensitivity slider and an explicit crop commit, then top-k
 * species ranking with a per-provider detail expander.
 */
export function renderClassify(
  root: HTMLElement,
  api: ApiClient,
  session: SessionState,
  deps: ClassifyDeps = {}
): void {
  const debounceMs = deps.debounceMs ?? 300;
  const readFile = deps.readFileAsB64 ?? defaultReadFileAsB64;
  const cropB64 = deps.cropB64 ?? defaultCropB64;

  root.innerHTML = `
    <section class="classify-page">
      <h1>Classify a slice</h1>
      <div class="drop-zone" data-testid="drop-zone">
        <p>Drop a slice image here, or</p>
        <input type="file" accept="image/png,image/jpeg" data-testid="file-input">
      </div>
      <div class="error-banner hidden" data-testid="error-banner"></div>
      <div class="workbench hidden" data-testid="workbench">
        <div class="preview-pane">
          <div class="preview-wrap" data-testid="preview-wrap">
            <img class="preview" data-testid="preview-img" alt="processed slice">
            <div class="crop-overlay hidden" data-testid="crop-overlay"></div>
          </div>
          <img class="mask" data-testid="mask-img" alt="foreground mask">
        </div>
        <div class="controls">
          <label>
            Segmentation sensitivity
            <input type="range" min="0" max="1" step="0.01" value="0"
                   data-testid="sensitivity-slider">
            <span data-testid="sensitivity-value">0.00</span>
          </label>
          <div class="hint hidden" data-testid="sensitivity-hint"></div>
          <div class="crop-controls">
            <button data-testid="crop-apply" disabled>Apply crop</button>
            <button data-testid="crop-clear" disabled>Clear crop</button>
          </div>
          <button class="primary" data-testid="classify-btn">Classify</button>
        </div>
      </div>
      <section class="results hidden" data-testid="results">
        <h2>Species ranking</h2>
        <div data-testid="predictions"></div>
        <details data-testid="provider-details">
          <summary>Per-provider probabilities</summary>
          <div data-testid="provider-vectors"></div>
        </details>
      </section>
    </section>`;

  const $ = <T extends HTMLElement>(id: string) =>
    root.querySelector<T>(`[data-testid="${id}"]`)!;
  const dropZone = $('drop-zone');
  const fileInput = $<HTMLInputElement>('file-input');
  const errorBanner = $('error-banner');
  const workbench = $('workbench');
  const previewWrap = $('preview-wrap');
  const previewImg = $<HTMLImageElement>('preview-img');
  const maskImg = $<HTMLImageElement>('mask-img');
  const slider = $<HTMLInputElement>('sensitivity-slider');
  const sliderValue = $('sensitivity-value');
  const sensitivityHint = $('sensitivity-hint');
  const cropOverlay = $('crop-overlay');
  const cropApply = $<HTMLButtonElement>('crop-apply');
  const cropClear = $<HTMLButtonElement>('crop-clear');
  const classifyBtn = $<HTMLButtonElement>('classify-btn');
  const results = $('results');
  const predictions = $('predictions');
  const providerVectors = $('provider-vectors');

  let inFlight = false;
  let rerunQueued = false;
  let pendingCrop: CropRect | null = null;

  function setError(message: string): void {
    errorBanner.textContent = message;
    errorBanner.classList.remove('hidden');
  }

  function clearTransient(): void {
    errorBanner.classList.add('hidden');
    sensitivityHint.classList.add('hidden');
  }

  function resetResults(): void {
    session.lastClassification = null;
    results.classList.add('hidden');
    predictions.innerHTML = '';
    providerVectors.innerHTML = '';
  }

  async function runPreprocess(): Promise<void> {
    if (session.originalB64 === null) return;
    if (inFlight) {
      // never more than one preprocess request in flight; rerun when done
      rerunQueued = true;
      return;
    }
    inFlight = true;
    clearTransient();
    try {
      let b64 = session.originalB64;
      if (session.crop !== null) {
        b64 = await cropB64(b64, session.crop);
      }
      const out = await api.preprocess({
        image_b64: b64,
        sensitivity: session.sensitivity,
      });
      session.uploadId = out.upload_id;
      previewImg.src = 'data:image/png;base64,' + out.preview_png_b64;
      maskImg.src = 'data:image/png;base64,' + out.mask_png_b64;
      workbench.classList.remove('hidden');
      resetResults();
    } catch (err) {
      if (err instanceof ApiError && err.code === 'empty_foreground') {
        sensitivityHint.textContent = err.hint || 'sensitivity too high';
        sensitivityHint.classList.remove('hidden');
      } else if (err instanceof OfflineError) {
        setError('The analysis API is unreachable. Start the service and retry.');
      } else if (err instanceof ApiError) {
        setError(`${err.message}${err.hint ? ` (${err.hint})` : ''}`);
      } else {
        setError('Unexpected error while preprocessing.');
      }
    } finally {
      inFlight = false;
      if (rerunQueued) {
        rerunQueued = false;
        void runPreprocess();
      }
    }
  }

  async function acceptFile(file: File): Promise<void> {
    try {
      session.originalB64 = await readFile(file);
    } catch {
      setError('Could not read the dropped file.');
      return;
    }
    session.crop = null;
    session.uploadId = null;
    resetResults();
    await runPreprocess();
  }

  fileInput.addEventListener('change', () => {
    const file = fileInput.files?.[0];
    if (file) void acceptFile(file);
  });
  dropZone.addEventListener('dragover', (e) => e.preventDefault());
  dropZone.addEventListener('drop', (e) => {
    e.preventDefault();
    const file = e.dataTransfer?.files?.[0];
    if (file) void acceptFile(file);
  });

  const commitSensitivity = debounce(() => void runPreprocess(), debounceMs);
  slider.addEventListener('input', () => {
    session.sensitivity = Number(slider.value);
    sliderValue.textContent = session.sensitivity.toFixed(2);
    commitSensitivity();
  });

  // crop rectangle: drag on the preview, commit explicitly with the button
  let dragStart: { x: number; y: number } | null = null;
  previewWrap.addEventListener('mousedown', (e) => {
    const box = previewWrap.getBoundingClientRect();
    if (box.width === 0 || box.height === 0) return;
    dragStart = { x: e.clientX - box.left, y: e.clientY - box.top };
  });
  previewWrap.addEventListener('mousemove', (e) => {
    if (dragStart === null) return;
    const box = previewWrap.getBoundingClientRect();
    const x = e.clientX - box.left;
    const y = e.clientY - box.top;
    const left = Math.min(dragStart.x, x);
    const top = Math.min(dragStart.y, y);
    const width = Math.abs(x - dragStart.x);
    const height = Math.abs(y - dragStart.y);
    cropOverlay.classList.remove('hidden');
    Object.assign(cropOverlay.style, {
      left: `${left}px`,
      top: `${top}px`,
      width: `${width}px`,
      height: `${height}px`,
    });
    pendingCrop = {
      x: left / box.width,
      y: top / box.height,
      width: width / box.width,
      height: height / box.height,
    };
    cropApply.disabled = false;
  });
  previewWrap.addEventListener('mouseup', () => {
    dragStart = null;
  });
  cropApply.addEventListener('click', () => {
    if (pendingCrop === null || pendingCrop.width <= 0 || pendingCrop.height <= 0) {
      return;
    }
    session.crop = pendingCrop;
    cropClear.disabled = false;
    void runPreprocess();
  });
  cropClear.addEventListener('click', () => {
    session.crop = null;
    pendingCrop = null;
    cropOverlay.classList.add('hidden');
    cropApply.disabled = true;
    cropClear.disabled = true;
    void runPreprocess();
  });

  classifyBtn.addEventListener('click', async () => {
    if (session.uploadId === null) {
      setError('Upload and preprocess a slice first.');
      return;
    }
    clearTransient();
    try {
      const out = await api.classify({ upload_id: session.uploadId, top_k: 5 });
      session.lastClassification = out;
      predictions.innerHTML = '';
      for (const p of out.predictions) {
        const row = document.createElement('div');
        row.className = 'prediction-row';
        row.dataset.testid = 'prediction-row';
        row.dataset.label = p.label;
        const bar = document.createElement('div');
        bar.className = 'prediction-bar';
        bar.style.width = `${(p.confidence * 100).toFixed(1)}%`;
        const text = document.createElement('span');
        text.textContent = `${p.label} ${(p.confidence * 100).toFixed(1)}%`;
        row.appendChild(bar);
        row.appendChild(text);
        predictions.appendChild(row);
      }
      providerVectors.innerHTML = '';
      for (const [providerId, vec] of Object.entries(out.provider_vectors)) {
        const line = document.createElement('div');
        line.dataset.testid = 'provider-vector';
        line.textContent =
          providerId + ': ' + vec.map((v) => v.toFixed(3)).join(', ');
        providerVectors.appendChild(line);
      }
      results.classList.remove('hidden');
    } catch (err) {
      if (err instanceof OfflineError) {
        setError('The analysis API is unreachable. Start the service and retry.');
      } else if (err instanceof ApiError) {
        setError(`${err.message}${err.hint ? ` (${err.hint})` : ''}`);
      } else {
        setError('Unexpected error while classifying.');
      }
    }
  });
}
