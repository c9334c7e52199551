// Browser bootstrap: one store, one socket, serialized decisions.

import { ApiClient } from "./api.js";
import { DecisionGate } from "./decision.js";
import { EventSubscription } from "./events.js";
import { renderApp } from "./render.js";
import { MissionStore } from "./store.js";

export function startConsole(root: HTMLElement, baseUrl: string): void {
  const api = new ApiClient(baseUrl);
  const store = new MissionStore();
  const wsBase = baseUrl.replace(/^http/, "ws");

  let decisionEnabled = true;
  const gate = new DecisionGate(api, {
    onApplied: (result) => {
      decisionEnabled = true;
      if (result.state) store.applyState(result.state);
    },
    onExpired: () => {
      // Candidate no longer pending: refresh instead of retrying.
      decisionEnabled = true;
      void api.getState().then((state) => store.applyState(state));
    },
    onError: () => {
      decisionEnabled = true;
      render(store.snapshot());
    },
  });

  function render(view = store.snapshot()): void {
    root.innerHTML = renderApp(view, decisionEnabled, baseUrl);
    const pendingId = view.pending?.candidate_id;
    if (pendingId === undefined) return;
    const confirm = root.querySelector<HTMLButtonElement>("#confirm-btn");
    const reject = root.querySelector<HTMLButtonElement>("#reject-btn");
    const decide = (decision: "confirm" | "reject") => {
      if (!gate.canSubmit(pendingId)) return;
      decisionEnabled = false;
      render();
      void gate.submit(pendingId, decision);
    };
    confirm?.addEventListener("click", () => decide("confirm"));
    reject?.addEventListener("click", () => decide("reject"));
  }

  store.subscribe((view) => render(view));

  const subscription = new EventSubscription(
    wsBase,
    api,
    store,
    (url) => new WebSocket(url) as unknown as import("./events.js").SocketLike,
  );
  void api.getState().then((state) => store.applyState(state));
  subscription.start();
}
