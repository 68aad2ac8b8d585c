/** Typed client for the /v1 HTTP API. Every call carries the session token. */

export interface Segment {
  start_seconds: number;
  end_seconds: number;
}

export interface SearchHit {
  uri: string;
  content_hash: string;
  segment: Segment | null;
  score: number;
  rank: number;
}

export interface SearchResponse {
  scope: string;
  query: string;
  hits: SearchHit[];
}

export interface Page<T> {
  items: T[];
  total: number;
  offset: number;
  limit: number;
  next_offset: number | null;
}

export interface DataSource {
  id: string;
  name: string;
  description: string;
  data_owner: string;
  access_level: string;
  roles: string[];
  storage_system: string;
  storage_locations: string[];
  media_uri_field: string;
  media_count: number;
  embeddings_enabled: boolean;
  view: string;
}

export interface MediaRef {
  uri: string;
  content_hash: string;
  segment: Segment | null;
}

export interface Provenance {
  type: string;
  [key: string]: unknown;
}

export interface DatasetVersion {
  label: string;
  created_at: number;
  parent: string | null;
  media_refs: MediaRef[];
  provenance: Provenance;
  applied_operations: string[];
}

export interface Dataset {
  id: string;
  name: string;
  creator_id: string;
  visibility: string;
  versions: DatasetVersion[];
  datasource: { datasource_id: string; name: string } | null;
  has_annotations: boolean;
  embeddings_enabled: boolean;
}

export interface LineageVersion {
  label: string;
  parent: string | null;
  created_at: number;
  provenance: Provenance;
  media_count: number;
  applied_operations: string[];
}

export interface Lineage {
  dataset_id: string;
  name: string;
  datasource: { datasource_id: string; name: string } | null;
  versions: LineageVersion[];
  annotations: { id: string; name: string; type: string; version: number }[];
}

export interface Annotation {
  id: string;
  dataset_id: string;
  version: number;
  name: string;
  type: string;
  is_default: boolean;
  properties: Record<string, string>;
}

export interface AnnotationExport {
  format: string;
  annotation_id: string;
  files: Record<string, unknown>;
}

export interface Operation {
  operation_id: string;
  kind: string;
  status: string;
  items_total: number;
  items_done: number;
  items_failed: number;
  error: string | null;
}

export interface ViewPage extends Page<Record<string, unknown>> {
  media_uri_field: string;
}

export interface SelectionRef {
  content_hash: string;
  segment: Segment | null;
}

/** Body of POST /v1/datasets in search-selection mode, exactly as the server expects it. */
export interface SearchSelectionBody {
  mode: "search-selection";
  scope: string;
  query_text: string;
  name: string;
  selections: SelectionRef[];
}

/** Error body from the API: {code, message, details} plus the HTTP status. */
export class ApiError extends Error {
  code: string;
  status: number;
  details: Record<string, unknown>;

  constructor(code: string, message: string, status: number, details: Record<string, unknown> = {}) {
    super(message);
    this.name = "ApiError";
    this.code = code;
    this.status = status;
    this.details = details;
  }
}

export class ApiClient {
  endpoint: string;
  token: string;

  constructor(endpoint: string, token: string) {
    this.endpoint = endpoint.replace(/\/+$/, "");
    this.token = token;
  }

  private async call<T>(method: string, path: string, body?: unknown, query?: Record<string, string>): Promise<T> {
    let url = this.endpoint + path;
    if (query) {
      const qs = new URLSearchParams(query).toString();
      if (qs) url += "?" + qs;
    }
    let response: Response;
    try {
      response = await fetch(url, {
        method,
        headers: {
          "X-Api-Token": this.token,
          ...(body === undefined ? {} : { "Content-Type": "application/json" }),
        },
        body: body === undefined ? undefined : JSON.stringify(body),
      });
    } catch (err) {
      throw new ApiError("UNREACHABLE", `cannot reach ${this.endpoint}: ${String(err)}`, 0);
    }
    if (!response.ok) {
      let payload: Record<string, unknown> = {};
      try {
        payload = (await response.json()) as Record<string, unknown>;
      } catch {
        // non-JSON error body; keep the status
      }
      throw new ApiError(
        typeof payload.code === "string" ? payload.code : "HTTP_ERROR",
        typeof payload.message === "string" ? payload.message : response.statusText,
        response.status,
        (payload.details as Record<string, unknown>) ?? {},
      );
    }
    return (await response.json()) as T;
  }

  listDatasources(offset = 0, limit = 100): Promise<Page<DataSource>> {
    return this.call("GET", "/v1/datasources", undefined, { offset: String(offset), limit: String(limit) });
  }

  getDatasource(id: string): Promise<DataSource> {
    return this.call("GET", `/v1/datasources/${id}`);
  }

  crawlDatasource(id: string): Promise<{ operation_id: string; status: string }> {
    return this.call("POST", `/v1/datasources/${id}/crawl`);
  }

  viewDatasource(id: string, query?: string, offset = 0, limit = 50): Promise<ViewPage> {
    const params: Record<string, string> = { offset: String(offset), limit: String(limit) };
    if (query) params.query = query;
    return this.call("GET", `/v1/datasources/${id}/view`, undefined, params);
  }

  listDatasets(offset = 0, limit = 100): Promise<Page<Dataset>> {
    return this.call("GET", "/v1/datasets", undefined, { offset: String(offset), limit: String(limit) });
  }

  getDataset(id: string): Promise<Dataset> {
    return this.call("GET", `/v1/datasets/${id}`);
  }

  getLineage(id: string): Promise<Lineage> {
    return this.call("GET", `/v1/datasets/${id}/lineage`);
  }

  listAnnotations(datasetId: string, version: number): Promise<Page<Annotation>> {
    return this.call("GET", `/v1/datasets/${datasetId}/versions/${version}/annotations`);
  }

  exportAnnotation(datasetId: string, version: number, annotationId: string, format: string): Promise<AnnotationExport> {
    return this.call(
      "GET",
      `/v1/datasets/${datasetId}/versions/${version}/annotations/${annotationId}/export`,
      undefined,
      { format },
    );
  }

  search(scope: string, query: string, k: number, mode = "EXACT"): Promise<SearchResponse> {
    return this.call("POST", "/v1/search", { scope, query, k, mode });
  }

  createDatasetFromSelection(body: SearchSelectionBody): Promise<Dataset> {
    return this.call("POST", "/v1/datasets", body);
  }

  getOperation(id: string): Promise<Operation> {
    return this.call("GET", `/v1/operations/${id}`);
  }

  /**
   * Fetch media bytes for a thumbnail and hand back an object URL, or null
   * where blobs cannot become object URLs (test DOMs); callers keep the
   * placeholder in that case.
   */
  async loadThumbnail(contentHash: string): Promise<string | null> {
    if (typeof URL.createObjectURL !== "function") return null;
    try {
      const response = await fetch(`${this.endpoint}/v1/media/${contentHash}`, {
        headers: { "X-Api-Token": this.token },
      });
      if (!response.ok) return null;
      return URL.createObjectURL(await response.blob());
    } catch {
      return null;
    }
  }
}
