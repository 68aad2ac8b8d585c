import { ApiClient, ApiError } from "./api";
import { UiSession } from "./session";
import { parseHash } from "./router";
import { escapeAttr, escapeHtml } from "./format";
import { initSearchView, renderSearchView } from "./views/search";
import {
  initDatasetListView,
  initDatasetView,
  renderDatasetListView,
  renderDatasetView,
} from "./views/dataset";
import {
  initDatasourceListView,
  initDatasourceView,
  renderDatasourceListView,
  renderDatasourceView,
} from "./views/datasource";

interface AppConfig {
  endpoint: string;
}

let session: UiSession | null = null;
let client: ApiClient | null = null;

function navigate(hash: string): void {
  if (location.hash === hash) {
    void renderRoute();
  } else {
    location.hash = hash;
  }
}

function appShell(): string {
  return `
    <header class="app-header">
      <span class="brand">metapix</span>
      <nav>
        <a href="#/search">Search</a>
        <a href="#/datasets">Datasets</a>
        <a href="#/datasources">Sources</a>
      </nav>
      <span class="muted" id="who">${escapeHtml(session ? session.endpoint : "")}</span>
    </header>
    <main id="outlet"></main>
  `;
}

async function renderRoute(): Promise<void> {
  if (!session || !client) return;
  const outlet = document.getElementById("outlet");
  if (!outlet) return;
  const route = parseHash(location.hash);
  if (route.view === "search") {
    outlet.innerHTML = renderSearchView(session);
    await initSearchView(outlet, session, client, navigate);
  } else if (route.view === "datasets") {
    outlet.innerHTML = renderDatasetListView();
    await initDatasetListView(outlet, client, navigate);
  } else if (route.view === "dataset" && route.id) {
    outlet.innerHTML = renderDatasetView();
    await initDatasetView(outlet, session, client, route.id, navigate);
  } else if (route.view === "datasources") {
    outlet.innerHTML = renderDatasourceListView();
    await initDatasourceListView(outlet, client, navigate);
  } else if (route.view === "datasource" && route.id) {
    outlet.innerHTML = renderDatasourceView();
    await initDatasourceView(outlet, session, client, route.id, navigate);
  }
}

function renderConnect(root: HTMLElement, endpoint: string, error = ""): void {
  root.innerHTML = `
    <div class="connect-card">
      <h1>metapix</h1>
      <p class="muted">endpoint <code>${escapeHtml(endpoint)}</code></p>
      <form id="connect-form">
        <input id="token-input" type="password" placeholder="API token"
               value="${escapeAttr("")}" autocomplete="off" />
        <button type="submit">Connect</button>
      </form>
      ${error ? `<div class="banner">${escapeHtml(error)}</div>` : ""}
    </div>
  `;
  const form = root.querySelector("#connect-form") as HTMLFormElement;
  form.addEventListener("submit", (event) => {
    event.preventDefault();
    const token = (root.querySelector("#token-input") as HTMLInputElement).value.trim();
    if (!token) return;
    void connect(root, endpoint, token);
  });
}

async function connect(root: HTMLElement, endpoint: string, token: string): Promise<void> {
  const candidate = new ApiClient(endpoint, token);
  try {
    await candidate.listDatasources(0, 1);
  } catch (err) {
    const text = err instanceof ApiError ? `${err.code}: ${err.message}` : String(err);
    renderConnect(root, endpoint, text);
    return;
  }
  client = candidate;
  session = new UiSession(endpoint, token);
  root.innerHTML = appShell();
  if (!location.hash) location.hash = "#/search";
  await renderRoute();
}

async function loadConfig(): Promise<AppConfig> {
  try {
    const response = await fetch("config.json");
    if (response.ok) return (await response.json()) as AppConfig;
  } catch {
    // fall through to the default endpoint
  }
  return { endpoint: "http://127.0.0.1:8047" };
}

export async function boot(root: HTMLElement): Promise<void> {
  const config = await loadConfig();
  renderConnect(root, config.endpoint);
  window.addEventListener("hashchange", () => void renderRoute());
}

const mount = document.getElementById("app");
if (mount) void boot(mount);
