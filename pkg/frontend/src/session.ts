/** One investigation: a graph under construction, its audit log, and the
 * read-only client that feeds both. Fetches may overlap, but merges into
 * the graph are serialized, and a failed fetch leaves the graph untouched. */

import type { ApiClient } from "./client.js";
import { AuditLog } from "./audit.js";
import type { AuditEntry } from "./audit.js";
import { InvestigationGraph, nodeKey } from "./graph.js";
import type { GraphNode, NodeStats } from "./graph.js";
import type {
  AddressEdge,
  AddressStats,
  Direction,
  EntityEdge,
  EntityStats,
  SearchResult,
} from "./types.js";
import { parseTagPack } from "./tagimport.js";
import { buildExport, parseExport, serializeExport } from "./exportfile.js";

export interface ExpandResult {
  addedNodes: string[];
  addedEdges: string[];
}

export interface BoundedSearchResult {
  expanded: string[];
  skipped: string[];
}

export interface BoundedSearchOptions {
  direction: Direction;
  maxDepth: number;
  maxDegree: number;
  pagesize?: number;
}

interface PreparedEdge {
  src: string;
  dst: string;
  value: number;
  nTransactions: number;
}

export class Investigation {
  readonly currency: string;
  readonly graph = new InvestigationGraph();
  readonly audit: AuditLog;
  private readonly client: ApiClient;
  private readonly overlayIndex = new Map<string, string[]>();
  private readonly importedAudits: AuditEntry[][] = [];
  private mergeChain: Promise<unknown> = Promise.resolve();

  constructor(client: ApiClient, currency: string, clock?: () => string) {
    this.client = client;
    this.currency = currency;
    this.audit = new AuditLog(clock);
  }

  /** Full-text lookup; the one action that precedes having nodes on screen. */
  async search(q: string): Promise<SearchResult> {
    const envelope = await this.client.search(this.currency, q);
    this.audit.append("search", { query: q });
    return envelope.data;
  }

  /** Fetches one address and displays it. Logged as a seed expansion. */
  async showAddress(address: string): Promise<string> {
    const envelope = await this.client.address(this.currency, address);
    return this.enqueue(() => {
      const key = this.display("address", envelope.data.address, envelope.data);
      this.audit.append("expand", { node: key, seed: true });
      return key;
    });
  }

  /** Fetches one entity and displays it. Logged as a seed expansion. */
  async showEntity(entityId: number): Promise<string> {
    const envelope = await this.client.entity(this.currency, entityId);
    return this.enqueue(() => {
      const key = this.display("entity", envelope.data.entity_id, envelope.data);
      this.audit.append("expand", { node: key, seed: true });
      return key;
    });
  }

  /** Pulls one neighbor page of a displayed node and merges it in.
   * Counterpart stats are fetched before anything is applied, so an API
   * error midway leaves the graph exactly as it was. Re-expanding is a
   * no-op that still appends its audit entry. */
  async expand(key: string, direction: Direction, pagesize = 25): Promise<ExpandResult> {
    const origin = this.graph.node(key);
    const prepared =
      origin.level === "entity"
        ? await this.prepareEntityEdges(origin, direction, pagesize)
        : await this.prepareAddressEdges(origin, direction, pagesize);
    return this.enqueue(() => {
      const result: ExpandResult = { addedNodes: [], addedEdges: [] };
      for (const edge of prepared.edges) {
        const counterpartKey = direction === "out" ? edge.dst : edge.src;
        const stats = prepared.stats.get(counterpartKey);
        const [level, id] = splitKey(counterpartKey);
        if (this.graph.addNode(this.currency, level, id, stats ?? null)) {
          result.addedNodes.push(counterpartKey);
          this.applyOverlays(counterpartKey);
        }
        if (this.graph.addEdge(edge.src, edge.dst, edge.value, edge.nTransactions)) {
          result.addedEdges.push(`${edge.src}->${edge.dst}`);
        }
      }
      this.audit.append("expand", {
        node: key,
        direction,
        pagesize,
        added_nodes: result.addedNodes.length,
        added_edges: result.addedEdges.length,
      });
      return result;
    });
  }

  /** Breadth-limited neighbor search: expands outward from a node for up
   * to maxDepth levels, skipping any frontier node whose counterpart count
   * in that direction exceeds maxDegree. Bounded, not exhaustive. */
  async boundedSearch(startKey: string, options: BoundedSearchOptions): Promise<BoundedSearchResult> {
    const expanded: string[] = [];
    const skipped: string[] = [];
    const visited = new Set([startKey]);
    let frontier = [startKey];
    for (let depth = 0; depth < options.maxDepth && frontier.length > 0; depth += 1) {
      const next: string[] = [];
      for (const key of frontier) {
        if (this.degree(key, options.direction) > options.maxDegree) {
          skipped.push(key);
          continue;
        }
        const result = await this.expand(key, options.direction, options.pagesize ?? 25);
        expanded.push(key);
        for (const added of result.addedNodes) {
          if (!visited.has(added)) {
            visited.add(added);
            next.push(added);
          }
        }
      }
      frontier = next;
    }
    return { expanded, skipped };
  }

  /** Sets a client-local note on a displayed node. */
  annotate(key: string, text: string): void {
    this.graph.annotate(key, text);
    this.audit.append("annotate", { node: key, text });
  }

  /** Overlays tag-pack labels onto matching displayed addresses. The tags
   * stay in the client; nothing is sent anywhere. */
  importTags(text: string): { matched: number } {
    const pack = parseTagPack(text);
    let matched = 0;
    for (const tag of pack.tags) {
      if (tag.currency !== undefined && tag.currency.toLowerCase() !== this.currency.toLowerCase()) {
        continue;
      }
      const labels = this.overlayIndex.get(tag.address) ?? [];
      if (!labels.includes(tag.label)) {
        labels.push(tag.label);
      }
      this.overlayIndex.set(tag.address, labels);
      const key = nodeKey(this.currency, "address", tag.address);
      if (this.graph.hasNode(key) && this.graph.addOverlay(key, tag.label)) {
        matched += 1;
      }
    }
    this.audit.append("import", {
      kind: "tags",
      title: pack.title,
      n_tags: pack.tags.length,
      matched,
    });
    return { matched };
  }

  /** Serializes the displayed graph, annotations, and audit log. */
  exportGraph(): string {
    const snapshot = this.graph.snapshot();
    this.audit.append("export", {
      n_nodes: snapshot.nodes.length,
      n_edges: snapshot.edges.length,
    });
    return serializeExport(buildExport(snapshot, this.audit.list()));
  }

  /** Rebuilds a previously exported investigation; needs no network. The
   * file's audit log is kept for reference, not replayed into this one. */
  importGraph(text: string): { nodes: number; edges: number } {
    const file = parseExport(text);
    for (const node of file.nodes) {
      this.graph.addNode(node.currency, node.level, node.id, node.stats);
      const key = nodeKey(node.currency, node.level, node.id);
      for (const label of node.overlays) {
        this.graph.addOverlay(key, label);
      }
    }
    for (const edge of file.edges) {
      this.graph.addEdge(edge.src, edge.dst, edge.estimated_value, edge.n_transactions);
    }
    for (const [key, note] of Object.entries(file.annotations)) {
      this.graph.annotate(key, note);
    }
    this.importedAudits.push(file.audit);
    this.audit.append("import", {
      kind: "graph",
      n_nodes: file.nodes.length,
      n_edges: file.edges.length,
    });
    return { nodes: file.nodes.length, edges: file.edges.length };
  }

  /** Audit logs carried in by imported files, in import order. */
  importedAuditLogs(): readonly AuditEntry[][] {
    return this.importedAudits.slice();
  }

  private async prepareEntityEdges(
    origin: GraphNode,
    direction: Direction,
    pagesize: number,
  ): Promise<{ edges: PreparedEdge[]; stats: Map<string, NodeStats> }> {
    const envelope = await this.client.neighbors(
      this.currency, "entity", Number(origin.id), direction, { pagesize });
    const edges = envelope.data.map((edge: EntityEdge) => ({
      src: nodeKey(this.currency, "entity", edge.src),
      dst: nodeKey(this.currency, "entity", edge.dst),
      value: edge.estimated_value,
      nTransactions: edge.n_transactions,
    }));
    const stats = await this.fetchMissing(edges, direction, (id) =>
      this.client.entity(this.currency, Number(id)).then((e) => e.data as NodeStats));
    return { edges, stats };
  }

  private async prepareAddressEdges(
    origin: GraphNode,
    direction: Direction,
    pagesize: number,
  ): Promise<{ edges: PreparedEdge[]; stats: Map<string, NodeStats> }> {
    const envelope = await this.client.neighbors(
      this.currency, "address", origin.id, direction, { pagesize });
    const edges = envelope.data.map((edge: AddressEdge) => ({
      src: nodeKey(this.currency, "address", edge.src_address),
      dst: nodeKey(this.currency, "address", edge.dst_address),
      value: edge.estimated_value,
      nTransactions: edge.n_transactions,
    }));
    const stats = await this.fetchMissing(edges, direction, (id) =>
      this.client.address(this.currency, id).then((e) => e.data as NodeStats));
    return { edges, stats };
  }

  private async fetchMissing(
    edges: PreparedEdge[],
    direction: Direction,
    fetchStats: (id: string) => Promise<NodeStats>,
  ): Promise<Map<string, NodeStats>> {
    const wanted = new Map<string, string>();
    for (const edge of edges) {
      const key = direction === "out" ? edge.dst : edge.src;
      if (!this.graph.hasNode(key) && !wanted.has(key)) {
        wanted.set(key, splitKey(key)[1]);
      }
    }
    const entries = [...wanted.entries()];
    const fetched = await Promise.all(entries.map(([, id]) => fetchStats(id)));
    return new Map(entries.map(([key], i) => [key, fetched[i]]));
  }

  private display(level: "address" | "entity", id: string | number, stats: NodeStats): string {
    const key = nodeKey(this.currency, level, id);
    this.graph.addNode(this.currency, level, id, stats);
    this.applyOverlays(key);
    return key;
  }

  private applyOverlays(key: string): void {
    const node = this.graph.node(key);
    if (node.level !== "address") {
      return;
    }
    for (const label of this.overlayIndex.get(node.id) ?? []) {
      this.graph.addOverlay(key, label);
    }
  }

  private degree(key: string, direction: Direction): number {
    const node = this.graph.node(key);
    if (node.stats === null) {
      return 0;
    }
    if (node.level === "entity") {
      const stats = node.stats as EntityStats;
      return direction === "out" ? stats.withdrawing_entities : stats.depositing_entities;
    }
    const stats = node.stats as AddressStats;
    return direction === "out" ? stats.withdrawing_addresses : stats.depositing_addresses;
  }

  /** Applies one merge step after every earlier one has finished. */
  private enqueue<T>(step: () => T): Promise<T> {
    const run = this.mergeChain.then(step);
    this.mergeChain = run.then(
      () => undefined,
      () => undefined,
    );
    return run;
  }
}

function splitKey(key: string): ["address" | "entity", string] {
  const parts = key.split("/");
  return [parts[1] as "address" | "entity", parts.slice(2).join("/")];
}
