import { ApiClient, ApiError } from "../api";
import type { DataSource } from "../api";
import type { UiSession } from "../session";
import { escapeAttr, escapeHtml } from "../format";

export function renderDatasourceListView(): string {
  return `<section class="view" id="datasource-list"><div class="loading">Loading sources...</div></section>`;
}

export async function initDatasourceListView(
  root: HTMLElement,
  client: ApiClient,
  navigate: (hash: string) => void,
): Promise<void> {
  const container = root.querySelector("#datasource-list") as HTMLElement;
  let page;
  try {
    page = await client.listDatasources();
  } catch (err) {
    const text = err instanceof ApiError ? `${err.code}: ${err.message}` : String(err);
    container.innerHTML = `<div class="page-error banner">${escapeHtml(text)}</div>`;
    return;
  }
  if (page.items.length === 0) {
    container.innerHTML = '<div class="empty-state">No data sources registered.</div>';
    return;
  }
  container.innerHTML = `
    <table class="list-table">
      <thead><tr><th>name</th><th>media</th><th>access</th><th>embeddings</th><th>id</th></tr></thead>
      <tbody>
        ${page.items
          .map(
            (source) => `
          <tr class="nav-row" data-target="#/datasources/${escapeAttr(source.id)}">
            <td>${escapeHtml(source.name)}</td>
            <td>${source.media_count}</td>
            <td>${escapeHtml(source.access_level)}</td>
            <td>${source.embeddings_enabled ? "on" : "off"}</td>
            <td><code>${escapeHtml(source.id)}</code></td>
          </tr>`,
          )
          .join("")}
      </tbody>
    </table>
  `;
  container.querySelectorAll<HTMLElement>(".nav-row").forEach((row) => {
    row.addEventListener("click", () => navigate(row.dataset.target ?? "#/datasources"));
  });
}

export function renderDatasourceView(): string {
  return `<section class="view" id="datasource-view"><div class="loading">Loading source...</div></section>`;
}

export async function initDatasourceView(
  root: HTMLElement,
  session: UiSession,
  client: ApiClient,
  datasourceId: string,
  navigate: (hash: string) => void,
): Promise<void> {
  const container = root.querySelector("#datasource-view") as HTMLElement;
  let source: DataSource;
  try {
    source = await client.getDatasource(datasourceId);
  } catch (err) {
    const text = err instanceof ApiError ? `${err.code}: ${err.message}` : String(err);
    container.innerHTML = `<div class="page-error banner">${escapeHtml(text)}</div>`;
    return;
  }

  container.innerHTML = `
    <header class="detail-header">
      <h2>${escapeHtml(source.name)}</h2>
      <span class="chip">${escapeHtml(source.access_level)}</span>
      ${source.embeddings_enabled ? '<span class="chip">embeddings</span>' : ""}
      <code class="id">${escapeHtml(source.id)}</code>
    </header>
    <dl class="facts">
      <dt>owner</dt><dd>${escapeHtml(source.data_owner)}</dd>
      <dt>media</dt><dd id="media-count">${source.media_count}</dd>
      <dt>locations</dt><dd>${source.storage_locations.map((location) => `<code>${escapeHtml(location)}</code>`).join(" ")}</dd>
      <dt>roles</dt><dd>${source.roles.length ? source.roles.map(escapeHtml).join(", ") : "-"}</dd>
    </dl>
    <div class="toolbar">
      <button id="search-source">Search this source</button>
      <button id="crawl-source">Crawl now</button>
      <span id="crawl-status" class="muted"></span>
    </div>
    <form id="view-form" class="toolbar">
      <label class="grow">Filter rows
        <input id="view-query" type="text" placeholder="camera = 'cam-1'" />
      </label>
      <button type="submit">Apply</button>
    </form>
    <div id="view-banner" class="banner hidden"></div>
    <div id="view-rows"></div>
  `;

  const crawlStatus = container.querySelector("#crawl-status") as HTMLElement;
  const viewBanner = container.querySelector("#view-banner") as HTMLElement;
  const viewRows = container.querySelector("#view-rows") as HTMLElement;

  (container.querySelector("#search-source") as HTMLButtonElement).addEventListener("click", () => {
    session.activeScope = `ds:${source.id}`;
    navigate("#/search");
  });

  (container.querySelector("#crawl-source") as HTMLButtonElement).addEventListener("click", () => {
    void (async () => {
      crawlStatus.textContent = "starting...";
      try {
        const started = await client.crawlDatasource(source.id);
        crawlStatus.textContent = `${started.operation_id} ${started.status}`;
        let operation = await client.getOperation(started.operation_id);
        while (operation.status !== "SUCCEEDED" && operation.status !== "FAILED") {
          await new Promise((resolve) => setTimeout(resolve, 1000));
          operation = await client.getOperation(started.operation_id);
        }
        crawlStatus.textContent = `${started.operation_id} ${operation.status}`;
        const fresh = await client.getDatasource(source.id);
        (container.querySelector("#media-count") as HTMLElement).textContent = String(fresh.media_count);
      } catch (err) {
        crawlStatus.textContent = err instanceof ApiError ? `${err.code}: ${err.message}` : String(err);
      }
    })();
  });

  async function loadView(query: string): Promise<void> {
    viewBanner.classList.add("hidden");
    try {
      const page = await client.viewDatasource(source.id, query || undefined);
      if (page.items.length === 0) {
        viewRows.innerHTML = '<div class="empty-state">No rows match.</div>';
        return;
      }
      const first = page.items[0] ?? {};
      const columns = Object.keys(first).slice(0, 8);
      viewRows.innerHTML = `
        <table class="list-table">
          <thead><tr>${columns.map((column) => `<th>${escapeHtml(column)}</th>`).join("")}</tr></thead>
          <tbody>
            ${page.items
              .map(
                (row) =>
                  `<tr>${columns
                    .map((column) => `<td>${escapeHtml(String(row[column] ?? ""))}</td>`)
                    .join("")}</tr>`,
              )
              .join("")}
          </tbody>
        </table>
        <div class="muted">${page.items.length} of ${page.total} rows</div>
      `;
    } catch (err) {
      viewRows.innerHTML = "";
      viewBanner.textContent = err instanceof ApiError ? `${err.code}: ${err.message}` : String(err);
      viewBanner.classList.remove("hidden");
    }
  }

  (container.querySelector("#view-form") as HTMLFormElement).addEventListener("submit", (event) => {
    event.preventDefault();
    void loadView((container.querySelector("#view-query") as HTMLInputElement).value.trim());
  });

  await loadView("");
}
