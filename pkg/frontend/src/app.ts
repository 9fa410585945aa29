/** Entry point: construct the pieces and let the stream drive them. */

import { Api } from "./api.js";
import { makeController } from "./controller.js";
import { AppModel } from "./model.js";
import { connectStream } from "./stream.js";
import { View } from "./views.js";

function authToken(): string | null {
  // accept ?token=... once, then keep it across reloads
  const fromUrl = new URL(window.location.href).searchParams.get("token");
  if (fromUrl) {
    localStorage.setItem("netstate.token", fromUrl);
    return fromUrl;
  }
  return localStorage.getItem("netstate.token");
}

export function boot(root: HTMLElement): void {
  const api = new Api("", authToken());
  const model = new AppModel();
  const controller = makeController(api, model);

  new View(root, model, controller.actions).mount();
  void controller.loadInitial();

  connectStream({
    url: api.streamUrl(),
    onEvent: controller.handleEvent,
    onLive: (live) => model.setLive(live),
  });
}

boot(document.getElementById("app") as HTMLElement);
