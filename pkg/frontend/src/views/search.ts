import { ApiClient, ApiError } from "../api";
import type { SearchHit } from "../api";
import { UiSession, refKey } from "../session";
import { basename, escapeAttr, escapeHtml, segmentLabel } from "../format";

export function renderSearchView(session: UiSession): string {
  return `
    <section class="view" id="search-view">
      <form id="search-form" class="toolbar">
        <label>Scope
          <select id="search-scope" required></select>
        </label>
        <label class="grow">Query
          <input id="search-query" type="text" placeholder="red truck"
                 value="${escapeAttr(session.currentQuery)}" required />
        </label>
        <label>k
          <input id="search-k" type="number" min="1" max="100" value="10" />
        </label>
        <label>Mode
          <select id="search-mode">
            <option value="EXACT">EXACT</option>
            <option value="APPROX">APPROX</option>
          </select>
        </label>
        <button type="submit" id="search-submit">Search</button>
      </form>
      <div id="search-banner" class="banner hidden"></div>
      <div id="search-results"></div>
      <div id="selection-bar" class="selection-bar hidden">
        <span id="selection-count"></span>
        <input id="dataset-name" type="text" placeholder="new dataset name" />
        <button id="create-dataset" disabled>Create dataset</button>
      </div>
    </section>
  `;
}

function hitCard(hit: SearchHit, selected: boolean): string {
  const key = refKey(hit.content_hash, hit.segment);
  const kind = hit.segment ? "VIDEO" : "IMAGE";
  const segment = hit.segment
    ? `<span class="segment">${segmentLabel(hit.segment)}</span>`
    : "";
  return `
    <div class="hit-card" data-key="${escapeAttr(key)}" data-rank="${hit.rank}"
         data-hash="${escapeAttr(hit.content_hash)}">
      <div class="thumb placeholder" data-thumb="${escapeAttr(hit.content_hash)}">${kind}</div>
      <div class="hit-meta">
        <span class="rank">#${hit.rank}</span>
        <span class="score">${String(hit.score)}</span>
        ${segment}
      </div>
      <div class="hit-name" title="${escapeAttr(hit.uri)}">${escapeHtml(basename(hit.uri))}</div>
      <label class="pick">
        <input type="checkbox" class="hit-select" data-key="${escapeAttr(key)}"
               ${selected ? "checked" : ""} /> select
      </label>
    </div>
  `;
}

export async function initSearchView(
  root: HTMLElement,
  session: UiSession,
  client: ApiClient,
  navigate: (hash: string) => void,
): Promise<void> {
  const form = root.querySelector("#search-form") as HTMLFormElement;
  const scopeSelect = root.querySelector("#search-scope") as HTMLSelectElement;
  const queryInput = root.querySelector("#search-query") as HTMLInputElement;
  const kInput = root.querySelector("#search-k") as HTMLInputElement;
  const modeSelect = root.querySelector("#search-mode") as HTMLSelectElement;
  const banner = root.querySelector("#search-banner") as HTMLElement;
  const results = root.querySelector("#search-results") as HTMLElement;
  const selectionBar = root.querySelector("#selection-bar") as HTMLElement;
  const selectionCount = root.querySelector("#selection-count") as HTMLElement;
  const nameInput = root.querySelector("#dataset-name") as HTMLInputElement;
  const createButton = root.querySelector("#create-dataset") as HTMLButtonElement;

  function showError(err: unknown): void {
    const text = err instanceof ApiError ? `${err.code}: ${err.message}` : String(err);
    banner.textContent = text;
    banner.classList.remove("hidden");
  }

  function syncSelectionBar(): void {
    const count = session.selectionSize();
    selectionBar.classList.toggle("hidden", session.displayed.length === 0);
    selectionCount.textContent = `${count} selected`;
    createButton.disabled = count === 0 || nameInput.value.trim() === "";
  }

  function drawResults(): void {
    const hits = session.displayed;
    if (hits.length === 0) {
      results.innerHTML = `<div class="empty-state">No results for "${escapeHtml(session.currentQuery)}" in ${escapeHtml(session.activeScope)}.</div>`;
      syncSelectionBar();
      return;
    }
    // rank is the API's ordering field; render strictly by it
    const ordered = hits.slice().sort((a, b) => a.rank - b.rank);
    results.innerHTML = `<div class="hit-grid">${ordered
      .map((hit) => hitCard(hit, session.isSelected(refKey(hit.content_hash, hit.segment))))
      .join("")}</div>`;
    results.querySelectorAll<HTMLInputElement>(".hit-select").forEach((box) => {
      box.addEventListener("change", () => {
        session.toggle(box.dataset.key ?? "");
        syncSelectionBar();
      });
    });
    results.querySelectorAll<HTMLElement>("[data-thumb]").forEach((cell) => {
      void client.loadThumbnail(cell.dataset.thumb ?? "").then((url) => {
        if (url) {
          cell.classList.remove("placeholder");
          cell.innerHTML = `<img src="${escapeAttr(url)}" alt="" />`;
        }
      });
    });
    syncSelectionBar();
  }

  async function loadScopes(): Promise<void> {
    const [sources, datasets] = await Promise.all([client.listDatasources(), client.listDatasets()]);
    const options: string[] = [];
    for (const source of sources.items) {
      options.push(`<option value="ds:${escapeAttr(source.id)}">source ${escapeHtml(source.name)}</option>`);
    }
    for (const dataset of datasets.items) {
      for (const version of dataset.versions) {
        const value = `dataset:${dataset.id}:${version.label}`;
        options.push(`<option value="${escapeAttr(value)}">${escapeHtml(dataset.name)} ${version.label}</option>`);
      }
    }
    scopeSelect.innerHTML = options.join("");
    if (session.activeScope) scopeSelect.value = session.activeScope;
  }

  form.addEventListener("submit", (event) => {
    event.preventDefault();
    void (async () => {
      banner.classList.add("hidden");
      const scope = scopeSelect.value;
      const query = queryInput.value.trim();
      if (!scope || !query) return;
      try {
        const response = await client.search(scope, query, Number(kInput.value) || 10, modeSelect.value);
        session.setResults(response.scope, response.query, response.hits);
        drawResults();
      } catch (err) {
        results.innerHTML = "";
        selectionBar.classList.add("hidden");
        showError(err);
      }
    })();
  });

  nameInput.addEventListener("input", syncSelectionBar);

  createButton.addEventListener("click", () => {
    void (async () => {
      const name = nameInput.value.trim();
      const selections = session.selectedRefs();
      if (!name || selections.length === 0) return;
      try {
        const dataset = await client.createDatasetFromSelection({
          mode: "search-selection",
          scope: session.activeScope,
          query_text: session.currentQuery,
          name,
          selections,
        });
        session.clearSelection();
        navigate(`#/datasets/${dataset.id}`);
      } catch (err) {
        showError(err);
      }
    })();
  });

  try {
    await loadScopes();
  } catch (err) {
    showError(err);
  }
  if (session.displayed.length > 0) drawResults();
}
