/** Browser bootstrap: pick a course, mount the player. */

import { SessionApi } from './api.js';
import { Player } from './player.js';
import { DocumentLike, ElementLike, render } from './render.js';

function serviceBase(): string {
  const params = new URLSearchParams(window.location.search);
  return params.get('service') ?? 'http://127.0.0.1:8400';
}

async function boot(): Promise<void> {
  const doc = document as unknown as DocumentLike;
  const rootEl = document.getElementById('player');
  const pickerEl = document.getElementById('courses');
  if (!rootEl || !pickerEl) throw new Error('missing #player / #courses containers');
  const root = rootEl as unknown as ElementLike;
  const picker = pickerEl as unknown as ElementLike;

  const api = new SessionApi(serviceBase());
  const player = new Player(api);
  player.onChange(() => render(doc, root, player));

  const { courses } = await api.courses();
  const buttons: ElementLike[] = [];
  for (const courseId of courses) {
    const button = doc.createElement('button');
    button.className = 'course';
    button.textContent = courseId;
    button.addEventListener('click', () => void player.startCourse(courseId));
    buttons.push(button);
  }
  picker.replaceChildren(...buttons);
  render(doc, root, player);
}

void boot().catch((err) => {
  const rootEl = document.getElementById('player');
  if (rootEl) rootEl.textContent = `Failed to reach the session service: ${err}`;
});
