import { ApiClient } from "./api.js";
import { Store } from "./store.js";
import { render } from "./view.js";

export interface App {
  store: Store;
  /** Resolves when no request is in flight; used by scripted sessions. */
  whenIdle: () => Promise<void>;
}

/**
 * Mount the triage app. ``baseUrl`` is empty when the bundle is served by
 * the core's serve-triage command; tests point it at a fixture server.
 */
export function createApp(root: HTMLElement, baseUrl = ""): App {
  const store = new Store(new ApiClient(baseUrl));
  store.subscribe(() => render(root, store));

  document.addEventListener("keydown", (event) => {
    const target = event.target as HTMLElement | null;
    if (target && (target.tagName === "TEXTAREA" || target.tagName === "INPUT")) {
      return; // typing a note, not issuing a shortcut
    }
    void store.keyPressed(event.key);
  });

  void store.init();
  return { store, whenIdle: () => store.whenIdle() };
}

declare global {
  interface Window {
    moralevalTriage?: App;
  }
}

const mount = document.getElementById("app");
if (mount !== null) {
  window.moralevalTriage = createApp(mount);
}
