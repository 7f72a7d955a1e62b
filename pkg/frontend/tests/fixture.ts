/** In-memory stand-in for the REST service, serving the golden co-spend
 * scenario: a1+a2 co-spend into a4 (one two-address entity), a1 alone pays
 * a3. Response bodies copy the service's envelope and field shapes. */

import { ApiClient } from "../src/client.js";
import type { FetchLike } from "../src/client.js";
import { Investigation } from "../src/session.js";
import type {
  AddressEdge,
  AddressStats,
  EntityEdge,
  EntityStats,
  KeyspaceStats,
  TagOut,
} from "../src/types.js";

export const C = 100_000_000;
export const T0 = 1_600_000_000;
export const RUN_ID = "f1x7ure0";

export const E0 = "btc/entity/0";
export const E2 = "btc/entity/2";
export const E3 = "btc/entity/3";
export const A1 = "btc/address/a1";
export const A2 = "btc/address/a2";
export const A3 = "btc/address/a3";
export const A4 = "btc/address/a4";

export const ADDRESS_STATS: Record<string, AddressStats> = {
  a1: {
    address: "a1", address_id: 0, entity_id: 0,
    deposits: 2, withdrawals: 2,
    depositing_addresses: 0, withdrawing_addresses: 2,
    coins_received: 60 * C, coins_spent: 60 * C, balance: 0,
    first_tx_id: 0, first_timestamp: T0,
    last_tx_id: 5, last_timestamp: T0 + 1800, activity_period: 1800,
  },
  a2: {
    address: "a2", address_id: 1, entity_id: 0,
    deposits: 2, withdrawals: 1,
    depositing_addresses: 0, withdrawing_addresses: 1,
    coins_received: 60 * C, coins_spent: 50 * C, balance: 10 * C,
    first_tx_id: 1, first_timestamp: T0 + 600,
    last_tx_id: 4, last_timestamp: T0 + 1800, activity_period: 1200,
  },
  a4: {
    address: "a4", address_id: 2, entity_id: 2,
    deposits: 1, withdrawals: 0,
    depositing_addresses: 2, withdrawing_addresses: 0,
    coins_received: 99.9 * C, coins_spent: 0, balance: 99.9 * C,
    first_tx_id: 3, first_timestamp: T0 + 1200,
    last_tx_id: 3, last_timestamp: T0 + 1200, activity_period: 0,
  },
  a3: {
    address: "a3", address_id: 3, entity_id: 3,
    deposits: 1, withdrawals: 0,
    depositing_addresses: 1, withdrawing_addresses: 0,
    coins_received: 9.9 * C, coins_spent: 0, balance: 9.9 * C,
    first_tx_id: 5, first_timestamp: T0 + 1800,
    last_tx_id: 5, last_timestamp: T0 + 1800, activity_period: 0,
  },
};

export const ENTITY_STATS: Record<number, EntityStats> = {
  0: {
    entity_id: 0, n_addresses: 2,
    deposits: 4, withdrawals: 3,
    depositing_entities: 0, withdrawing_entities: 2,
    coins_received: 120 * C, coins_spent: 110 * C, balance: 10 * C,
    first_tx_id: 0, first_timestamp: T0,
    last_tx_id: 5, last_timestamp: T0 + 1800, activity_period: 1800,
    tag_coherence: 0.9375,
  },
  2: {
    entity_id: 2, n_addresses: 1,
    deposits: 1, withdrawals: 0,
    depositing_entities: 1, withdrawing_entities: 0,
    coins_received: 99.9 * C, coins_spent: 0, balance: 99.9 * C,
    first_tx_id: 3, first_timestamp: T0 + 1200,
    last_tx_id: 3, last_timestamp: T0 + 1200, activity_period: 0,
    tag_coherence: 1.0,
  },
  3: {
    entity_id: 3, n_addresses: 1,
    deposits: 1, withdrawals: 0,
    depositing_entities: 1, withdrawing_entities: 0,
    coins_received: 9.9 * C, coins_spent: 0, balance: 9.9 * C,
    first_tx_id: 5, first_timestamp: T0 + 1800,
    last_tx_id: 5, last_timestamp: T0 + 1800, activity_period: 0,
  },
};

const ADDRESS_EDGES: AddressEdge[] = [
  { src: 0, dst: 2, src_address: "a1", dst_address: "a4",
    estimated_value: 49.95 * C, n_transactions: 1, tx_list: [3] },
  { src: 0, dst: 3, src_address: "a1", dst_address: "a3",
    estimated_value: 9.9 * C, n_transactions: 1, tx_list: [5] },
  { src: 1, dst: 2, src_address: "a2", dst_address: "a4",
    estimated_value: 49.95 * C, n_transactions: 1, tx_list: [3] },
];

const ENTITY_EDGES: EntityEdge[] = [
  { src: 0, dst: 2, estimated_value: 99.9 * C, n_transactions: 1, tx_list: [3] },
  { src: 0, dst: 3, estimated_value: 9.9 * C, n_transactions: 1, tx_list: [5] },
];

const TAGS: TagOut[] = [
  {
    address: "a1", address_id: 0, entity_id: 0,
    label: "Internet Archive", normalized_label: "internet archive",
    currency: "BTC", lastmod: "2021-01-01", category: "organization",
    unobserved: false,
    pack_title: "Golden fixture tags", pack_creator: "tester", pack_lastmod: "2021-01-01",
  },
  {
    address: "a2", address_id: 1, entity_id: 0,
    label: "InternetArchive", normalized_label: "internetarchive",
    currency: "BTC", lastmod: "2021-01-01", category: "organization",
    unobserved: false,
    pack_title: "Golden fixture tags", pack_creator: "tester", pack_lastmod: "2021-01-01",
  },
];

export const STATS: KeyspaceStats = {
  currency: "btc",
  n_blocks: 4, n_transactions: 6, n_addresses: 4, n_entities: 3,
  n_address_edges: 3, n_entity_edges: 2, n_tags: 2,
  last_block_timestamp: T0 + 1800,
};

const TX_HASHES = [1, 2, 3, 4, 5, 6].map((n) => n.toString(16).padStart(64, "0"));
const LABELS = ["Internet Archive", "InternetArchive"];

export interface FixtureOptions {
  /** Requests whose URL contains any of these fragments return a 503. */
  failOn?: string[];
  /** Per-request artificial latency, to exercise overlapping fetches. */
  delayMs?: (url: string) => number;
}

export function makeFixtureFetch(options: FixtureOptions = {}): FetchLike {
  return async (url, init) => {
    const delay = options.delayMs?.(url) ?? 0;
    if (delay > 0) {
      await new Promise((resolve) => setTimeout(resolve, delay));
    }
    if (options.failOn?.some((fragment) => url.includes(fragment))) {
      return json(503, { code: "keyspace_error", message: "partition unreadable" });
    }
    if ((init?.method ?? "GET") !== "GET") {
      return json(405, { code: "method_not_allowed", message: "read-only service" });
    }
    return route(new URL(url));
  };
}

function route(url: URL): Response {
  const parts = url.pathname.split("/").filter((p) => p !== "");
  if (parts[0] !== "btc") {
    return json(404, { code: "unknown_currency", message: `unknown currency: ${parts[0]}` });
  }
  const rest = parts.slice(1);
  if (rest.length === 1 && rest[0] === "stats") {
    return ok(STATS);
  }
  if (rest.length === 1 && rest[0] === "search") {
    return search(url.searchParams.get("q") ?? "");
  }
  if (rest[0] === "addresses" && rest.length >= 2) {
    return addressRoute(rest[1], rest[2], url);
  }
  if (rest[0] === "entities" && rest.length >= 2) {
    return entityRoute(rest[1], rest[2], url);
  }
  return json(404, { code: "unknown_id", message: `no such route: ${url.pathname}` });
}

function addressRoute(address: string, sub: string | undefined, url: URL): Response {
  const stats = ADDRESS_STATS[address];
  if (stats === undefined) {
    return json(404, { code: "unknown_id", message: `unknown address: ${address}` });
  }
  if (sub === undefined) {
    return ok(stats);
  }
  if (sub === "entity") {
    return ok(ENTITY_STATS[stats.entity_id]);
  }
  if (sub === "tags") {
    return ok(TAGS.filter((tag) => tag.address === address));
  }
  if (sub === "neighbors") {
    const direction = url.searchParams.get("direction");
    const rows = direction === "out"
      ? ADDRESS_EDGES.filter((edge) => edge.src_address === address)
      : ADDRESS_EDGES.filter((edge) => edge.dst_address === address);
    return page(rows, url);
  }
  return json(404, { code: "unknown_id", message: `no such route: ${url.pathname}` });
}

function entityRoute(idText: string, sub: string | undefined, url: URL): Response {
  const entityId = Number(idText);
  const stats = ENTITY_STATS[entityId];
  if (stats === undefined) {
    return json(404, { code: "unknown_id", message: `unknown entity id: ${idText}` });
  }
  if (sub === undefined) {
    return ok(stats);
  }
  if (sub === "addresses") {
    const members = Object.values(ADDRESS_STATS).filter((a) => a.entity_id === entityId);
    return page(members, url);
  }
  if (sub === "tags") {
    return ok(TAGS.filter((tag) => tag.entity_id === entityId));
  }
  if (sub === "neighbors") {
    const direction = url.searchParams.get("direction");
    const rows = direction === "out"
      ? ENTITY_EDGES.filter((edge) => edge.src === entityId)
      : ENTITY_EDGES.filter((edge) => edge.dst === entityId);
    return page(rows, url);
  }
  return json(404, { code: "unknown_id", message: `no such route: ${url.pathname}` });
}

function search(q: string): Response {
  if (q.length < 3) {
    return json(400, { code: "query_too_short", message: "query must be at least 3 characters" });
  }
  const needle = q.toLowerCase();
  return ok({
    addresses: Object.keys(ADDRESS_STATS).sort().filter((a) => a.startsWith(q)).slice(0, 10),
    transactions: TX_HASHES.filter((h) => h.startsWith(needle)).slice(0, 10),
    labels: LABELS.filter((l) => l.toLowerCase().includes(needle)).slice(0, 10),
  });
}

function page<T>(rows: T[], url: URL): Response {
  const pagesize = Number(url.searchParams.get("pagesize") ?? "25");
  const offset = Number(url.searchParams.get("cursor") ?? "0");
  if (!Number.isInteger(pagesize) || pagesize < 1 || !Number.isInteger(offset) || offset < 0) {
    return json(400, { code: "param_error", message: "bad paging parameters" });
  }
  const slice = rows.slice(offset, offset + pagesize);
  const more = offset + slice.length < rows.length;
  return ok(slice, more ? String(offset + slice.length) : undefined);
}

function ok(data: unknown, nextCursor?: string): Response {
  const body: Record<string, unknown> = { currency: "btc", run_id: RUN_ID, data };
  if (nextCursor !== undefined) {
    body.next_cursor = nextCursor;
  }
  return json(200, body);
}

function json(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "content-type": "application/json" },
  });
}

/** A deterministic second-ticking clock for reproducible audit entries. */
export function tickingClock(): () => string {
  let tick = 0;
  return () => new Date(tick++ * 1000).toISOString();
}

export function newSession(options: FixtureOptions = {}): {
  session: Investigation;
  client: ApiClient;
} {
  const client = new ApiClient("http://api.test", makeFixtureFetch(options));
  return { session: new Investigation(client, "btc", tickingClock()), client };
}
