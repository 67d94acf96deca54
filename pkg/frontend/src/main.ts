import { ApiClient } from './api';
import { createSession } from './state';
import { renderClassify } from './pages/classify';
import { renderLanding } from './pages/landing';
import { renderMatch } from './pages/match';
import './style.css';

const api = new ApiClient('');
const session = createSession();

function route(): void {
  const root = document.getElementById('app');
  if (!root) return;
  const hash = window.location.hash || '#/';
  if (hash.startsWith('#/classify')) {
    renderClassify(root, api, session);
  } else if (hash.startsWith('#/match')) {
    void renderMatch(root, api, session);
  } else {
    void renderLanding(root, api);
  }
}

window.addEventListener('hashchange', route);
window.addEventListener('DOMContentLoaded', route);
