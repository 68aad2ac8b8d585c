import { afterEach, beforeEach, describe, expect, it } from "vitest";

import { ApiClient, ApiError } from "../src/api";
import { FakeFetch, fixture } from "./helpers";

const BASE = "http://api.test";

describe("ApiClient", () => {
  let fake: FakeFetch;
  let client: ApiClient;

  beforeEach(() => {
    fake = new FakeFetch();
    client = new ApiClient(BASE, "tok-1");
  });

  afterEach(() => fake.restore());

  it("sends the token header on every call", async () => {
    fake.route("GET", /^\/v1\/datasources$/, fixture("datasources")).install();
    await client.listDatasources();
    expect(fake.requests[0]?.headers["X-Api-Token"]).toBe("tok-1");
  });

  it("parses recorded pages", async () => {
    fake.route("GET", /^\/v1\/datasources$/, fixture("datasources")).install();
    const page = await client.listDatasources();
    expect(page.total).toBe(fixture("datasources").body.total);
    expect(page.items.map((s) => s.name)).toContain("gate-cameras");
  });

  it("raises ApiError with the server's code, message, and status", async () => {
    fake.route("GET", /^\/v1\/datasources\/.+$/, fixture("error-403")).install();
    const err = await client.getDatasource("ds-locked").catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err.code).toBe("ACCESS_DENIED");
    expect(err.status).toBe(403);
    expect(err.message).toMatch(/gated/);
  });

  it("maps unknown ids to the recorded 404 code", async () => {
    fake.route("GET", /^\/v1\/datasets\/.+$/, fixture("error-404")).install();
    const err = await client.getDataset("dset-missing").catch((e) => e);
    expect(err.code).toBe("UNKNOWN_DATASET");
    expect(err.status).toBe(404);
  });

  it("wraps network failure as UNREACHABLE", async () => {
    const original = globalThis.fetch;
    globalThis.fetch = (() => Promise.reject(new TypeError("connect ECONNREFUSED"))) as typeof fetch;
    try {
      const err = await client.listDatasets().catch((e) => e);
      expect(err).toBeInstanceOf(ApiError);
      expect(err.code).toBe("UNREACHABLE");
    } finally {
      globalThis.fetch = original;
    }
  });

  it("posts the documented search body", async () => {
    fake.route("POST", /^\/v1\/search$/, fixture("search")).install();
    await client.search("ds:ds-1", "red truck", 10, "EXACT");
    expect(fake.sent("POST", "/v1/search")[0]?.body).toEqual({
      scope: "ds:ds-1",
      query: "red truck",
      k: 10,
      mode: "EXACT",
    });
  });

  it("posts the documented search-selection body verbatim", async () => {
    fake.route("POST", /^\/v1\/datasets$/, fixture("dataset-created")).install();
    const body = {
      mode: "search-selection" as const,
      scope: "ds:ds-1",
      query_text: "red truck",
      name: "red-picks",
      selections: [
        { content_hash: "aaa", segment: { start_seconds: 0, end_seconds: 5 } },
        { content_hash: "bbb", segment: null },
      ],
    };
    await client.createDatasetFromSelection(body);
    expect(fake.sent("POST", "/v1/datasets")[0]?.body).toEqual(body);
  });

  it("passes the export format as a query parameter", async () => {
    fake.route("GET", /\/export$/, fixture("export")).install();
    await client.exportAnnotation("dset-1", 1, "ann-1", "COCO");
    expect(fake.requests[0]?.search).toBe("?format=COCO");
  });
});
