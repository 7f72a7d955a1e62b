/** Read-only API client. Every request funnels through one guarded sender
 * that refuses anything but GET and records a network log entry, so the
 * no-write guarantee is enforced in code and checkable from tests. */

import type {
  AddressEdge,
  AddressStats,
  BlockOut,
  Direction,
  EntityEdge,
  EntityStats,
  Envelope,
  KeyspaceStats,
  Level,
  Problem,
  SearchResult,
  TagOut,
  TxOut,
} from "./types.js";

export interface NetworkLogEntry {
  method: string;
  url: string;
  status: number;
}

export class ApiError extends Error {
  readonly code: string;
  readonly status: number;

  constructor(code: string, message: string, status: number) {
    super(message);
    this.name = "ApiError";
    this.code = code;
    this.status = status;
  }
}

/** Structural fetch type so tests can hand in a plain mock function. */
export type FetchLike = (
  url: string,
  init?: { method?: string },
) => Promise<Response>;

export interface PageOptions {
  pagesize?: number;
  cursor?: string;
}

export class ApiClient {
  private readonly baseUrl: string;
  private readonly fetchFn: FetchLike;
  private readonly log: NetworkLogEntry[] = [];

  constructor(baseUrl: string, fetchFn?: FetchLike) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
    this.fetchFn = fetchFn ?? ((url, init) => fetch(url, init));
  }

  /** Snapshot of every request sent so far, in order. */
  networkLog(): readonly NetworkLogEntry[] {
    return this.log.slice();
  }

  block(currency: string, height: number): Promise<Envelope<BlockOut>> {
    return this.request(`/${enc(currency)}/blocks/${height}`);
  }

  tx(currency: string, hash: string): Promise<Envelope<TxOut>> {
    return this.request(`/${enc(currency)}/txs/${enc(hash)}`);
  }

  address(currency: string, address: string): Promise<Envelope<AddressStats>> {
    return this.request(`/${enc(currency)}/addresses/${enc(address)}`);
  }

  addressEntity(currency: string, address: string): Promise<Envelope<EntityStats>> {
    return this.request(`/${enc(currency)}/addresses/${enc(address)}/entity`);
  }

  entity(currency: string, entityId: number): Promise<Envelope<EntityStats>> {
    return this.request(`/${enc(currency)}/entities/${entityId}`);
  }

  entityAddresses(
    currency: string,
    entityId: number,
    page: PageOptions = {},
  ): Promise<Envelope<AddressStats[]>> {
    return this.request(`/${enc(currency)}/entities/${entityId}/addresses`, {
      pagesize: page.pagesize,
      cursor: page.cursor,
    });
  }

  tags(currency: string, level: Level, id: string | number): Promise<Envelope<TagOut[]>> {
    const stem = level === "address" ? "addresses" : "entities";
    return this.request(`/${enc(currency)}/${stem}/${enc(String(id))}/tags`);
  }

  neighbors(
    currency: string,
    level: "address",
    id: string,
    direction: Direction,
    page?: PageOptions,
  ): Promise<Envelope<AddressEdge[]>>;
  neighbors(
    currency: string,
    level: "entity",
    id: number,
    direction: Direction,
    page?: PageOptions,
  ): Promise<Envelope<EntityEdge[]>>;
  neighbors(
    currency: string,
    level: Level,
    id: string | number,
    direction: Direction,
    page: PageOptions = {},
  ): Promise<Envelope<AddressEdge[]> | Envelope<EntityEdge[]>> {
    const stem = level === "address" ? "addresses" : "entities";
    return this.request(`/${enc(currency)}/${stem}/${enc(String(id))}/neighbors`, {
      direction,
      pagesize: page.pagesize,
      cursor: page.cursor,
    });
  }

  search(currency: string, q: string): Promise<Envelope<SearchResult>> {
    return this.request(`/${enc(currency)}/search`, { q });
  }

  stats(currency: string): Promise<Envelope<KeyspaceStats>> {
    return this.request(`/${enc(currency)}/stats`);
  }

  private request<T>(
    path: string,
    params?: Record<string, string | number | undefined>,
  ): Promise<T> {
    let query = "";
    if (params) {
      const parts = Object.entries(params)
        .filter(([, value]) => value !== undefined)
        .map(([key, value]) => `${key}=${encodeURIComponent(String(value))}`);
      query = parts.length > 0 ? `?${parts.join("&")}` : "";
    }
    return this.send("GET", `${this.baseUrl}${path}${query}`);
  }

  /** The only code path that touches the network. */
  private async send<T>(method: string, url: string): Promise<T> {
    if (method !== "GET") {
      throw new Error(`refusing non-GET request: ${method} ${url}`);
    }
    let response: Response;
    try {
      response = await this.fetchFn(url, { method });
    } catch (cause) {
      this.log.push({ method, url, status: 0 });
      throw new ApiError("network_error", `request failed: ${String(cause)}`, 0);
    }
    this.log.push({ method, url, status: response.status });
    if (!response.ok) {
      const problem = (await response.json().catch(() => null)) as Problem | null;
      throw new ApiError(
        problem?.code ?? "http_error",
        problem?.message ?? `unexpected status ${response.status}`,
        response.status,
      );
    }
    return (await response.json()) as T;
  }
}

function enc(segment: string): string {
  return encodeURIComponent(segment);
}
