import { ApiClient, ApiError } from "../api";
import type { Annotation, Dataset, Lineage, MediaRef } from "../api";
import type { UiSession } from "../session";
import { basename, escapeAttr, escapeHtml, formatWhen, provenanceDetail, segmentLabel } from "../format";

interface CocoImage {
  id: number;
  file_name: string;
  width: number;
  height: number;
}

interface CocoBox {
  image_id: number;
  bbox: [number, number, number, number];
}

function provenanceChip(provenance: Record<string, unknown>): string {
  const type = typeof provenance.type === "string" ? provenance.type : "UNKNOWN";
  const detail = provenanceDetail(provenance);
  const text = detail ? `${type}: ${detail}` : type;
  return `<span class="chip prov-chip" data-prov-type="${escapeAttr(type)}">${escapeHtml(text)}</span>`;
}

function versionRow(entry: Lineage["versions"][number], latest: boolean, selected: boolean): string {
  return `
    <tr class="version-row ${selected ? "selected" : ""}" data-version="${escapeAttr(entry.label)}">
      <td class="label">${escapeHtml(entry.label)}${latest ? ' <span class="chip latest">latest</span>' : ""}</td>
      <td>${entry.parent ? escapeHtml(entry.parent) : "root"}</td>
      <td class="media-count">${entry.media_count}</td>
      <td>${provenanceChip(entry.provenance)}</td>
      <td>${escapeHtml(formatWhen(entry.created_at))}</td>
    </tr>
  `;
}

function mediaCard(ref: MediaRef): string {
  const kind = ref.segment ? "VIDEO" : "IMAGE";
  const segment = ref.segment ? `<span class="segment">${segmentLabel(ref.segment)}</span>` : "";
  return `
    <div class="media-card" data-name="${escapeAttr(basename(ref.uri))}">
      <div class="thumb placeholder" data-thumb="${escapeAttr(ref.content_hash)}">${kind}</div>
      <div class="overlay-host"></div>
      <div class="hit-name" title="${escapeAttr(ref.uri)}">${escapeHtml(basename(ref.uri))}</div>
      ${segment}
    </div>
  `;
}

function annotationRow(annotation: Annotation): string {
  return `
    <li class="annotation-row" data-annotation="${escapeAttr(annotation.id)}">
      <span class="ann-name">${escapeHtml(annotation.name)}</span>
      <span class="chip ann-type">${escapeHtml(annotation.type)}</span>
      ${annotation.is_default ? '<span class="chip default">default</span>' : ""}
    </li>
  `;
}

/** "v1 -> v2 -> v3" walked over parent pointers, oldest first. */
function parentChain(lineage: Lineage): string {
  const byLabel = new Map(lineage.versions.map((entry) => [entry.label, entry]));
  const last = lineage.versions[lineage.versions.length - 1];
  if (!last) return "";
  const chain: string[] = [];
  let cursor: string | null = last.label;
  while (cursor) {
    chain.push(cursor);
    cursor = byLabel.get(cursor)?.parent ?? null;
  }
  chain.reverse();
  return chain.join(" -> ");
}

export function renderDatasetView(): string {
  return `<section class="view" id="dataset-view"><div class="loading">Loading dataset...</div></section>`;
}

export async function initDatasetView(
  root: HTMLElement,
  session: UiSession,
  client: ApiClient,
  datasetId: string,
  navigate: (hash: string) => void,
): Promise<void> {
  const container = root.querySelector("#dataset-view") as HTMLElement;

  let dataset: Dataset;
  let lineage: Lineage;
  try {
    [dataset, lineage] = await Promise.all([client.getDataset(datasetId), client.getLineage(datasetId)]);
  } catch (err) {
    const text = err instanceof ApiError ? `${err.code}: ${err.message}` : String(err);
    container.innerHTML = `<div class="page-error banner">${escapeHtml(text)}</div>`;
    return;
  }

  const latestLabel = lineage.versions[lineage.versions.length - 1]?.label ?? "v1";
  let selectedLabel = latestLabel;

  const origin = lineage.datasource
    ? `from source <a href="#/datasources/${escapeAttr(lineage.datasource.datasource_id)}" data-link>${escapeHtml(lineage.datasource.name)}</a>`
    : "standalone (file import)";

  function draw(): void {
    const rows = lineage.versions
      .map((entry) => versionRow(entry, entry.label === latestLabel, entry.label === selectedLabel))
      .join("");
    const version = dataset.versions.find((entry) => entry.label === selectedLabel);
    const refs = version ? version.media_refs : [];
    container.innerHTML = `
      <header class="detail-header">
        <h2>${escapeHtml(lineage.name)}</h2>
        <span class="chip">${escapeHtml(dataset.visibility)}</span>
        <span class="origin">${origin}</span>
        <code class="id">${escapeHtml(lineage.dataset_id)}</code>
      </header>
      <div class="lineage-panel">
        <span class="chain-label">lineage</span>
        <code id="parent-chain">${escapeHtml(parentChain(lineage))}</code>
      </div>
      <table class="version-table">
        <thead><tr><th>version</th><th>parent</th><th>media</th><th>provenance</th><th>created</th></tr></thead>
        <tbody id="version-rows">${rows}</tbody>
      </table>
      <div class="panel-split">
        <div>
          <h3>media in ${escapeHtml(selectedLabel)}</h3>
          <div class="toolbar">
            <button id="toggle-boxes" class="hidden">Show boxes</button>
          </div>
          <div class="hit-grid" id="media-grid">${refs.map(mediaCard).join("")}</div>
        </div>
        <div>
          <h3>annotations on ${escapeHtml(selectedLabel)}</h3>
          <ul class="annotation-list" id="annotation-list"><li class="muted">loading...</li></ul>
        </div>
      </div>
    `;

    container.querySelectorAll<HTMLElement>(".version-row").forEach((row) => {
      row.addEventListener("click", () => {
        selectedLabel = row.dataset.version ?? latestLabel;
        draw();
      });
    });
    container.querySelectorAll<HTMLAnchorElement>("[data-link]").forEach((link) => {
      link.addEventListener("click", (event) => {
        event.preventDefault();
        navigate(link.getAttribute("href") ?? "#/");
      });
    });
    container.querySelectorAll<HTMLElement>("[data-thumb]").forEach((cell) => {
      void client.loadThumbnail(cell.dataset.thumb ?? "").then((url) => {
        if (url) {
          cell.classList.remove("placeholder");
          cell.innerHTML = `<img src="${escapeAttr(url)}" alt="" />`;
        }
      });
    });
    void loadAnnotations();
  }

  async function loadAnnotations(): Promise<void> {
    const list = container.querySelector("#annotation-list") as HTMLElement;
    const versionNumber = Number(selectedLabel.slice(1));
    let annotations: Annotation[];
    try {
      annotations = (await client.listAnnotations(datasetId, versionNumber)).items;
    } catch (err) {
      list.innerHTML = `<li class="banner">${escapeHtml(String(err))}</li>`;
      return;
    }
    list.innerHTML = annotations.length
      ? annotations.map(annotationRow).join("")
      : '<li class="muted">none</li>';
    const coco = annotations.find((annotation) => annotation.type === "COCO");
    const toggle = container.querySelector("#toggle-boxes") as HTMLButtonElement;
    if (!coco) return;
    toggle.classList.remove("hidden");
    let shown = false;
    toggle.addEventListener("click", () => {
      void (async () => {
        shown = !shown;
        toggle.textContent = shown ? "Hide boxes" : "Show boxes";
        if (shown) {
          await drawBoxes(coco, versionNumber);
        } else {
          container.querySelectorAll(".bbox").forEach((node) => node.remove());
        }
      })();
    });
  }

  async function drawBoxes(annotation: Annotation, versionNumber: number): Promise<void> {
    const exported = await client.exportAnnotation(datasetId, versionNumber, annotation.id, "COCO");
    const doc = Object.values(exported.files).find(
      (file) => typeof file === "object" && file !== null && "images" in (file as object),
    ) as { images: CocoImage[]; annotations: CocoBox[] } | undefined;
    if (!doc) return;
    const byImageId = new Map(doc.images.map((image) => [image.id, image]));
    const byName = new Map<string, { image: CocoImage; boxes: CocoBox[] }>();
    for (const box of doc.annotations) {
      const image = byImageId.get(box.image_id);
      if (!image) continue;
      const name = basename(image.file_name);
      const entry = byName.get(name) ?? { image, boxes: [] };
      entry.boxes.push(box);
      byName.set(name, entry);
    }
    container.querySelectorAll<HTMLElement>(".media-card").forEach((card) => {
      const entry = byName.get(card.dataset.name ?? "");
      if (!entry) return;
      const host = card.querySelector(".overlay-host") as HTMLElement;
      host.innerHTML = entry.boxes
        .map((box) => {
          const [x, y, w, h] = box.bbox;
          const { width, height } = entry.image;
          return `<div class="bbox" style="left:${(x / width) * 100}%;top:${(y / height) * 100}%;width:${(w / width) * 100}%;height:${(h / height) * 100}%"></div>`;
        })
        .join("");
    });
  }

  draw();
}

export function renderDatasetListView(): string {
  return `<section class="view" id="dataset-list"><div class="loading">Loading datasets...</div></section>`;
}

export async function initDatasetListView(
  root: HTMLElement,
  client: ApiClient,
  navigate: (hash: string) => void,
): Promise<void> {
  const container = root.querySelector("#dataset-list") as HTMLElement;
  let page;
  try {
    page = await client.listDatasets();
  } catch (err) {
    const text = err instanceof ApiError ? `${err.code}: ${err.message}` : String(err);
    container.innerHTML = `<div class="page-error banner">${escapeHtml(text)}</div>`;
    return;
  }
  if (page.items.length === 0) {
    container.innerHTML = '<div class="empty-state">No datasets yet. Create one from search results.</div>';
    return;
  }
  container.innerHTML = `
    <table class="list-table">
      <thead><tr><th>name</th><th>versions</th><th>visibility</th><th>origin</th><th>id</th></tr></thead>
      <tbody>
        ${page.items
          .map(
            (dataset) => `
          <tr class="nav-row" data-target="#/datasets/${escapeAttr(dataset.id)}">
            <td>${escapeHtml(dataset.name)}</td>
            <td>${dataset.versions.length}</td>
            <td>${escapeHtml(dataset.visibility)}</td>
            <td>${dataset.datasource ? escapeHtml(dataset.datasource.name) : "file import"}</td>
            <td><code>${escapeHtml(dataset.id)}</code></td>
          </tr>`,
          )
          .join("")}
      </tbody>
    </table>
  `;
  container.querySelectorAll<HTMLElement>(".nav-row").forEach((row) => {
    row.addEventListener("click", () => navigate(row.dataset.target ?? "#/datasets"));
  });
}
