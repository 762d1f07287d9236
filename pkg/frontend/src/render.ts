/** DOM rendering over narrow element interfaces.
 *
 * The interfaces cover just what the player needs, so tests can drive the
 * exact same rendering code with a lightweight stand-in document while the
 * browser passes the real one.
 */

import { ExternalAction } from './api.js';
import { Player, PlayerViewModel } from './player.js';

export interface ElementLike {
  className: string;
  textContent: string | null;
  appendChild(child: ElementLike): unknown;
  addEventListener(type: string, handler: () => void): void;
  setAttribute(name: string, value: string): void;
  replaceChildren(...children: ElementLike[]): void;
  value?: string;
}

export interface DocumentLike {
  createElement(tag: string): ElementLike;
}

const ACTION_LABELS: Record<ExternalAction, string> = {
  next: 'Next',
  back: 'Back',
  submit: 'Submit',
};

export function render(doc: DocumentLike, root: ElementLike, player: Player): void {
  const vm = player.view;
  const children: ElementLike[] = [];

  if (vm.banner) {
    const banner = doc.createElement('div');
    banner.className = 'banner';
    banner.textContent = vm.banner;
    if (vm.canRetry) {
      const retry = doc.createElement('button');
      retry.className = 'retry';
      retry.textContent = 'Retry';
      retry.addEventListener('click', () => void player.retry());
      banner.appendChild(retry);
    } else {
      const dismiss = doc.createElement('button');
      dismiss.className = 'dismiss';
      dismiss.textContent = 'Dismiss';
      dismiss.addEventListener('click', () => player.dismissBanner());
      banner.appendChild(dismiss);
    }
    children.push(banner);
  }

  const crumbs = doc.createElement('nav');
  crumbs.className = 'breadcrumbs';
  crumbs.textContent = vm.breadcrumbs.join(' / ');
  children.push(crumbs);

  const stage = doc.createElement('section');
  stage.className = 'stage';
  if (vm.status === 'completed') {
    stage.textContent = 'Course completed';
    stage.className = 'stage completed';
  } else if (vm.unit) {
    const title = doc.createElement('h2');
    title.textContent = `${vm.unit.kind}: ${vm.unit.id}`;
    stage.appendChild(title);
    const payload = doc.createElement(isLink(vm.unit.payloadRef) ? 'a' : 'p');
    payload.className = 'payload';
    payload.textContent = vm.unit.payloadRef;
    if (isLink(vm.unit.payloadRef)) payload.setAttribute('href', vm.unit.payloadRef);
    stage.appendChild(payload);
  } else if (vm.position === 'exit') {
    stage.textContent = 'Section boundary reached';
  } else {
    stage.textContent = 'No course loaded';
  }
  children.push(stage);

  const meta = doc.createElement('div');
  meta.className = 'attempts';
  meta.textContent = vm.sessionId ? `Attempt ${vm.attempts}` : '';
  children.push(meta);

  const controls = doc.createElement('div');
  controls.className = 'controls';
  let scoreInput: ElementLike | null = null;
  for (const action of vm.actions) {
    if (action === 'submit') {
      scoreInput = doc.createElement('input');
      scoreInput.className = 'score';
      scoreInput.setAttribute('type', 'number');
      scoreInput.setAttribute('min', '0');
      scoreInput.setAttribute('max', '1');
      scoreInput.setAttribute('step', '0.05');
      scoreInput.value = '1';
      controls.appendChild(scoreInput);
    }
    const button = doc.createElement('button');
    button.className = `action ${action}`;
    button.textContent = ACTION_LABELS[action];
    const input = scoreInput;
    button.addEventListener('click', () => {
      if (action === 'submit') {
        void player.act('submit', clampScore(input && input.value ? Number(input.value) : 1));
      } else {
        void player.act(action);
      }
    });
    controls.appendChild(button);
  }
  children.push(controls);

  root.replaceChildren(...children);
}

function clampScore(raw: number): number {
  if (Number.isNaN(raw)) return 1;
  return Math.min(1, Math.max(0, raw));
}

function isLink(ref: string): boolean {
  return ref.startsWith('http://') || ref.startsWith('https://');
}
