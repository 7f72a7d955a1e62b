/** The investigation graph a user builds up while tracing flows.
 * Nodes are keyed by (currency, level, id) so re-adding is a no-op, and an
 * edge may only connect nodes that are already displayed. */

import type { AddressStats, EntityStats, Level } from "./types.js";

export type NodeStats = AddressStats | EntityStats;

export interface GraphNode {
  key: string;
  currency: string;
  level: Level;
  id: string;
  stats: NodeStats | null;
  annotation: string | null;
  overlays: string[];
}

export interface GraphEdge {
  key: string;
  src: string;
  dst: string;
  estimatedValue: number;
  nTransactions: number;
}

export interface GraphSnapshot {
  nodes: GraphNode[];
  edges: GraphEdge[];
}

export function nodeKey(currency: string, level: Level, id: string | number): string {
  return `${currency}/${level}/${id}`;
}

export class InvestigationGraph {
  private readonly nodes = new Map<string, GraphNode>();
  private readonly edges = new Map<string, GraphEdge>();

  get nodeCount(): number {
    return this.nodes.size;
  }

  get edgeCount(): number {
    return this.edges.size;
  }

  hasNode(key: string): boolean {
    return this.nodes.has(key);
  }

  node(key: string): GraphNode {
    const found = this.nodes.get(key);
    if (found === undefined) {
      throw new Error(`node not displayed: ${key}`);
    }
    return found;
  }

  /** Returns true when the node was new; an existing key is left alone. */
  addNode(currency: string, level: Level, id: string | number, stats: NodeStats | null): boolean {
    const key = nodeKey(currency, level, id);
    if (this.nodes.has(key)) {
      return false;
    }
    this.nodes.set(key, {
      key,
      currency,
      level,
      id: String(id),
      stats,
      annotation: null,
      overlays: [],
    });
    return true;
  }

  /** Returns true when the edge was new. Both endpoints must be displayed. */
  addEdge(src: string, dst: string, estimatedValue: number, nTransactions: number): boolean {
    if (!this.nodes.has(src)) {
      throw new Error(`edge endpoint not displayed: ${src}`);
    }
    if (!this.nodes.has(dst)) {
      throw new Error(`edge endpoint not displayed: ${dst}`);
    }
    const key = `${src}->${dst}`;
    if (this.edges.has(key)) {
      return false;
    }
    this.edges.set(key, { key, src, dst, estimatedValue, nTransactions });
    return true;
  }

  /** Sets or clears the client-local note on a displayed node. */
  annotate(key: string, text: string): void {
    this.node(key).annotation = text === "" ? null : text;
  }

  /** Adds a client-local tag badge; duplicates are ignored. */
  addOverlay(key: string, label: string): boolean {
    const node = this.node(key);
    if (node.overlays.includes(label)) {
      return false;
    }
    node.overlays.push(label);
    return true;
  }

  /** Nodes and edges in insertion order, as defensive copies. */
  snapshot(): GraphSnapshot {
    return {
      nodes: [...this.nodes.values()].map((node) => ({
        ...node,
        overlays: node.overlays.slice(),
      })),
      edges: [...this.edges.values()].map((edge) => ({ ...edge })),
    };
  }
}
