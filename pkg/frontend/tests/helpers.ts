import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

const here = dirname(fileURLToPath(import.meta.url));

export interface Recorded {
  status: number;
  body: any;
}

/** A response recorded from the real server by scripts/record-fixtures.mjs. */
export function fixture(name: string): Recorded {
  return JSON.parse(readFileSync(join(here, "fixtures", `${name}.json`), "utf8"));
}

export interface CapturedRequest {
  method: string;
  path: string;
  search: string;
  headers: Record<string, string>;
  body: any;
}

type Responder = Recorded | ((request: CapturedRequest) => Recorded);

/**
 * Drop-in fetch double serving recorded fixtures. Routes match on method
 * and pathname; every request is captured for body/header assertions.
 * Unrouted paths come back 599 so a missing route fails loudly.
 */
export class FakeFetch {
  requests: CapturedRequest[] = [];
  private routes: { method: string; pattern: RegExp; responder: Responder }[] = [];
  private original: typeof globalThis.fetch | null = null;

  route(method: string, pattern: RegExp, responder: Responder): this {
    this.routes.push({ method: method.toUpperCase(), pattern, responder });
    return this;
  }

  install(): void {
    this.original = globalThis.fetch;
    globalThis.fetch = (async (input: any, init?: any) => {
      const url = new URL(typeof input === "string" ? input : input.url);
      const request: CapturedRequest = {
        method: (init?.method ?? "GET").toUpperCase(),
        path: url.pathname,
        search: url.search,
        headers: { ...(init?.headers ?? {}) },
        body: init?.body ? JSON.parse(init.body) : undefined,
      };
      this.requests.push(request);
      for (const { method, pattern, responder } of this.routes) {
        if (method === request.method && pattern.test(url.pathname)) {
          const recorded = typeof responder === "function" ? responder(request) : responder;
          return new Response(JSON.stringify(recorded.body), {
            status: recorded.status,
            headers: { "Content-Type": "application/json" },
          });
        }
      }
      return new Response(JSON.stringify({ code: "UNROUTED", message: request.path }), { status: 599 });
    }) as typeof globalThis.fetch;
  }

  restore(): void {
    if (this.original) globalThis.fetch = this.original;
  }

  sent(method: string, path: string): CapturedRequest[] {
    return this.requests.filter((request) => request.method === method && request.path === path);
  }
}

export function mount(): HTMLElement {
  document.body.innerHTML = '<div id="root"></div>';
  return document.getElementById("root") as HTMLElement;
}

/** Poll until the predicate holds; view handlers settle over microtasks and fetches. */
export async function until(predicate: () => boolean, timeoutMs = 3000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  for (;;) {
    if (predicate()) return;
    if (Date.now() > deadline) throw new Error("condition never became true");
    await new Promise((resolve) => setTimeout(resolve, 10));
  }
}

export function submit(form: HTMLFormElement): void {
  form.dispatchEvent(new Event("submit", { bubbles: true, cancelable: true }));
}

export function setChecked(box: HTMLInputElement, value: boolean): void {
  box.checked = value;
  box.dispatchEvent(new Event("change", { bubbles: true }));
}

export function type(input: HTMLInputElement, text: string): void {
  input.value = text;
  input.dispatchEvent(new Event("input", { bubbles: true }));
}
