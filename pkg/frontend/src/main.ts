import { WorkbenchClient } from './api.js';
import { WorkbenchApp } from './ui.js';

const params = new URLSearchParams(window.location.search);
const base = params.get('api') ?? 'http://127.0.0.1:8400';

const root = document.getElementById('app');
if (!root) {
  throw new Error('missing #app mount point');
}
new WorkbenchApp(root, new WorkbenchClient(base));
