/** Entry point: one polling loop, one render sink.
 *
 * All network traffic goes through `serialize`, so a slow poll and a
 * label submission can never interleave. The service address comes from
 * the `?api=` query parameter and falls back to the page's own origin.
 */

import { ApiClient } from "./api.js";
import type { Handlers } from "./render.js";
import { renderApp } from "./render.js";
import {
  applyAck,
  beginSubmit,
  choose,
  deriveView,
  initialState,
  withFetchError,
  withNetwork,
  withQueries,
  withScatter,
  withStatus,
} from "./state.js";

const POLL_MS = 750;

const params = new URLSearchParams(window.location.search);
const base = params.get("api") ?? window.location.origin;
const api = new ApiClient(base);

const root = document.getElementById("app");
if (root === null) throw new Error("missing #app mount point");

let state = initialState();

// promise chain that keeps every server call strictly ordered
let queue: Promise<void> = Promise.resolve();
function serialize(task: () => Promise<void>): Promise<void> {
  queue = queue.then(task, task);
  return queue;
}

function render(): void {
  renderApp(root as HTMLElement, deriveView(state), handlers);
}

async function pollOnce(): Promise<void> {
  try {
    const status = await api.status();
    state = withStatus(state, status);
    const queries = await api.queries();
    state = withQueries(state, queries);
    // no snapshot yet (fold rollover included) empties the panel: what is
    // on screen must always mirror the latest responses, never a stale fold
    const rows = await api.projection(state.network);
    state = withScatter(state, rows ?? []);
  } catch (err) {
    state = withFetchError(state, `service unreachable: ${String(err)}`);
  }
  render();
}

async function submitOnce(): Promise<void> {
  const start = beginSubmit(state);
  if (!start.ok) return;
  state = start.state;
  render();
  const outcome = await api.submitLabels(start.body);
  state = applyAck(state, outcome);
  render();
}

const handlers: Handlers = {
  onChoose(id, cls) {
    state = choose(state, id, cls);
    render();
  },
  onSubmit() {
    void serialize(submitOnce);
  },
  onNetwork(network) {
    state = withNetwork(state, network);
    render();
    void serialize(async () => {
      try {
        const rows = await api.projection(state.network);
        state = withScatter(state, rows ?? []);
      } catch (err) {
        state = withFetchError(state, `service unreachable: ${String(err)}`);
      }
      render();
    });
  },
};

render();
void (async () => {
  for (;;) {
    await serialize(pollOnce);
    await new Promise((resolve) => setTimeout(resolve, POLL_MS));
  }
})();
