import assert from 'node:assert/strict';
import { test } from 'node:test';

import { FetchLike, SessionApi, SessionView } from '../src/api.js';
import { Player } from '../src/player.js';
import { render } from '../src/render.js';
import { FakeDocument, FakeElement, breadcrumbsOf, buttonsOf, clickAction } from './fakedom.js';

function view(overrides: Partial<SessionView> = {}): SessionView {
  return {
    session_id: 's1',
    course_id: 'demo',
    status: 'active',
    tick: 1,
    breadcrumbs: ['cur', 'it1'],
    position: 'unit',
    current_unit: { id: 'a1', kind: 'asset', payload_ref: 'text:intro' },
    available_events: ['next'],
    attempts: 1,
    ...overrides,
  };
}

function jsonResponse(status: number, doc: unknown): Response {
  return new Response(JSON.stringify(doc), {
    status,
    headers: { 'Content-Type': 'application/json' },
  });
}

interface Call {
  url: string;
  method: string;
  body: unknown;
}

function stubApi(script: Array<(call: Call) => Response | Promise<Response>>) {
  const calls: Call[] = [];
  const fetchFn: FetchLike = async (url, init) => {
    const call: Call = {
      url,
      method: init?.method ?? 'GET',
      body: init?.body ? JSON.parse(String(init.body)) : null,
    };
    calls.push(call);
    const handler = script.shift();
    if (!handler) throw new Error(`unexpected request ${call.method} ${call.url}`);
    return handler(call);
  };
  return { api: new SessionApi('http://service', fetchFn), calls };
}

function mount(player: Player): FakeElement {
  const doc = new FakeDocument();
  const root = new FakeElement('div');
  player.onChange(() => render(doc, root, player));
  return root;
}

test('start_course renders the first view', async () => {
  const { api, calls } = stubApi([() => jsonResponse(201, view())]);
  const player = new Player(api);
  const root = mount(player);
  await player.startCourse('demo');
  assert.equal(calls[0].method, 'POST');
  assert.equal(calls[0].url, 'http://service/sessions');
  assert.equal(breadcrumbsOf(root), 'cur / it1');
  assert.deepEqual(buttonsOf(root), ['Next']);
  assert.match(root.text(), /asset: a1/);
});

test('unknown course shows a banner and creates no session', async () => {
  const { api } = stubApi([() => jsonResponse(404, { error: "no course 'ghost'" })]);
  const player = new Player(api);
  const root = mount(player);
  await player.startCourse('ghost');
  assert.equal(player.view.sessionId, null);
  assert.match(root.text(), /no course 'ghost'/);
  assert.deepEqual(buttonsOf(root), []);
});

test('rendered buttons always equal the available events', async () => {
  const { api } = stubApi([
    () => jsonResponse(201, view()),
    () =>
      jsonResponse(
        200,
        view({
          current_unit: { id: 'q1', kind: 'assessment', payload_ref: 'quiz:1' },
          available_events: ['submit'],
        }),
      ),
  ]);
  const player = new Player(api);
  const root = mount(player);
  await player.startCourse('demo');
  await player.act('next');
  assert.deepEqual(buttonsOf(root), ['Submit']);
  assert.deepEqual(player.view.actions, ['submit']);
});

test('double click advances exactly once', async () => {
  let release: (() => void) | null = null;
  const gate = new Promise<void>((resolve) => {
    release = resolve;
  });
  const { api, calls } = stubApi([
    () => jsonResponse(201, view()),
    async () => {
      await gate;
      return jsonResponse(200, view({ attempts: 1, tick: 2 }));
    },
    () => jsonResponse(200, view({ tick: 3 })),
  ]);
  const player = new Player(api);
  mount(player);
  await player.startCourse('demo');
  const first = player.act('next');
  const second = player.act('next'); // dropped: a request is in flight
  release!();
  await Promise.all([first, second]);
  assert.equal(calls.length, 2, 'second click must not produce a second POST');
});

test('409 refreshes available actions without crashing', async () => {
  const { api, calls } = stubApi([
    () => jsonResponse(201, view()),
    () => jsonResponse(409, { error: 'event not enabled', available_events: ['submit'] }),
    () =>
      jsonResponse(
        200,
        view({
          current_unit: { id: 'q1', kind: 'assessment', payload_ref: 'quiz:1' },
          available_events: ['submit'],
        }),
      ),
  ]);
  const player = new Player(api);
  const root = mount(player);
  await player.startCourse('demo');
  await player.act('next');
  assert.equal(calls[2].method, 'GET');
  assert.deepEqual(buttonsOf(root), ['Submit']);
  assert.match(root.text(), /event not enabled/);
});

test('network failure keeps the view and offers retry', async () => {
  const { api, calls } = stubApi([
    () => jsonResponse(201, view()),
    () => Promise.reject(new TypeError('fetch failed')),
    () => jsonResponse(200, view({ tick: 2, attempts: 1 })),
  ]);
  const player = new Player(api);
  const root = mount(player);
  await player.startCourse('demo');
  await player.act('next');
  assert.equal(player.view.canRetry, true);
  assert.equal(breadcrumbsOf(root), 'cur / it1'); // view unchanged
  const retryButton = root.find((el) => el.className === 'retry');
  assert.ok(retryButton, 'retry affordance rendered');
  await player.retry();
  assert.equal(calls.length, 3);
  assert.equal(player.view.canRetry, false);
});

test('submit button sends the entered score', async () => {
  const { api, calls } = stubApi([
    () =>
      jsonResponse(
        201,
        view({
          current_unit: { id: 'q1', kind: 'assessment', payload_ref: 'quiz:1' },
          available_events: ['submit'],
        }),
      ),
    () => jsonResponse(200, view({ status: 'completed', position: 'completed', available_events: [] })),
  ]);
  const player = new Player(api);
  const root = mount(player);
  await player.startCourse('demo');
  clickAction(root, 'submit', 0.75);
  await new Promise((resolve) => setTimeout(resolve, 0));
  assert.deepEqual(calls[1].body, { type: 'submit', score: 0.75 });
  assert.match(root.text(), /Course completed/);
  assert.deepEqual(buttonsOf(root), []);
});
