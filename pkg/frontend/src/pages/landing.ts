import { ApiClient, OfflineError } from '../api';

function el(tag: string, className: string, text?: string): HTMLElement {
  const node = document.createElement(tag);
  node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

/**
 * Overview page: what the system does, headline metrics when a report is
 * deployed, per-species dataset cards, and links into the two tool pages.
 */
export async function renderLanding(root: HTMLElement, api: ApiClient): Promise<void> {
  root.innerHTML = '';

  const hero = el('section', 'hero');
  hero.appendChild(el('h1', '', 'Foram slice explorer'));
  hero.appendChild(
    el(
      'p',
      'lede',
      'Upload a micro-CT slice image to identify the species, or search the ' +
        'volume corpus for the matching slice position and orientation.'
    )
  );
  const links = el('nav', 'entry-links');
  const classifyLink = el('a', 'entry-link', 'Classify a slice');
  classifyLink.setAttribute('href', '#/classify');
  const matchLink = el('a', 'entry-link', 'Find a slice in 3D');
  matchLink.setAttribute('href', '#/match');
  links.appendChild(classifyLink);
  links.appendChild(matchLink);
  hero.appendChild(links);

  const quickStart = el('ol', 'quick-start');
  for (const step of [
    'Drop a grayscale slice image onto the classification page.',
    'Adjust the segmentation sensitivity until the preview isolates the shell.',
    'Classify, then jump to the 3D page to locate the slice in its volume.',
  ]) {
    quickStart.appendChild(el('li', '', step));
  }
  hero.appendChild(quickStart);
  root.appendChild(hero);

  const report = await api.headlineReport();
  if (report !== null) {
    const metrics = el('section', 'headline-metrics');
    metrics.dataset.testid = 'headline-metrics';
    metrics.appendChild(el('h2', '', 'Benchmark results'));
    const cards = el('div', 'metric-cards');
    const rows: Array<[string, number]> = [
      ['Accuracy', report.accuracy],
      ['Top-3 accuracy', report.top3_accuracy],
      ['Macro F1', report.macro_f1],
    ];
    if (report.macro_auc !== undefined) rows.push(['Macro AUC', report.macro_auc]);
    for (const [name, value] of rows) {
      const card = el('div', 'metric-card');
      card.appendChild(el('div', 'metric-name', name));
      card.appendChild(el('div', 'metric-value', (value * 100).toFixed(1) + '%'));
      cards.appendChild(card);
    }
    metrics.appendChild(cards);
    root.appendChild(metrics);
  }

  const dataset = el('section', 'dataset');
  dataset.appendChild(el('h2', '', 'Corpus'));
  try {
    const volumes = await api.volumes();
    const cards = el('div', 'species-cards');
    cards.dataset.testid = 'species-cards';
    const species = Object.keys(volumes.species_totals).sort();
    for (const name of species) {
      const count = volumes.species_totals[name] ?? 0;
      const nVolumes = volumes.volumes.filter((v) => v.species === name).length;
      const card = el('div', 'species-card');
      card.dataset.testid = 'species-card';
      card.appendChild(el('div', 'species-name', name));
      card.appendChild(el('div', 'species-count', `${count} slices`));
      card.appendChild(el('div', 'species-volumes', `${nVolumes} volumes`));
      cards.appendChild(card);
    }
    dataset.appendChild(cards);
  } catch (err) {
    const banner = el('div', 'offline-banner');
    banner.dataset.testid = 'offline-banner';
    banner.textContent =
      err instanceof OfflineError
        ? 'The analysis API is unreachable. Start the service and reload.'
        : 'Could not load the corpus summary. Try again shortly.';
    dataset.appendChild(banner);
  }
  root.appendChild(dataset);
}
