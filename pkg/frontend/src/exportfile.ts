/** Self-contained investigation files: versioned JSON holding the displayed
 * graph, client-local annotations, and the audit log. Imports are validated
 * before anything is applied, so a malformed file changes nothing. */

import type { AuditEntry } from "./audit.js";
import type { GraphSnapshot, NodeStats } from "./graph.js";
import { nodeKey } from "./graph.js";
import type { Level } from "./types.js";

export const EXPORT_VERSION = 1;

const AUDIT_ACTIONS = ["search", "expand", "annotate", "import", "export"];

export class GraphImportError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "GraphImportError";
  }
}

export interface ExportedNode {
  currency: string;
  level: Level;
  id: string;
  stats: NodeStats | null;
  overlays: string[];
}

export interface ExportedEdge {
  src: string;
  dst: string;
  estimated_value: number;
  n_transactions: number;
}

export interface ExportFile {
  version: number;
  nodes: ExportedNode[];
  edges: ExportedEdge[];
  annotations: Record<string, string>;
  audit: AuditEntry[];
}

export function buildExport(snapshot: GraphSnapshot, audit: AuditEntry[]): ExportFile {
  const annotations: Record<string, string> = {};
  for (const node of snapshot.nodes) {
    if (node.annotation !== null) {
      annotations[node.key] = node.annotation;
    }
  }
  return {
    version: EXPORT_VERSION,
    nodes: snapshot.nodes.map((node) => ({
      currency: node.currency,
      level: node.level,
      id: node.id,
      stats: node.stats,
      overlays: node.overlays.slice(),
    })),
    edges: snapshot.edges.map((edge) => ({
      src: edge.src,
      dst: edge.dst,
      estimated_value: edge.estimatedValue,
      n_transactions: edge.nTransactions,
    })),
    annotations,
    audit,
  };
}

export function serializeExport(file: ExportFile): string {
  return JSON.stringify(file, null, 2);
}

export function parseExport(text: string): ExportFile {
  let raw: unknown;
  try {
    raw = JSON.parse(text);
  } catch {
    throw new GraphImportError("file is not valid JSON");
  }
  if (typeof raw !== "object" || raw === null || Array.isArray(raw)) {
    throw new GraphImportError("file must be a JSON object");
  }
  const doc = raw as Record<string, unknown>;
  if (doc.version !== EXPORT_VERSION) {
    throw new GraphImportError(`unsupported export version: ${String(doc.version)}`);
  }
  if (!Array.isArray(doc.nodes) || !Array.isArray(doc.edges) || !Array.isArray(doc.audit)) {
    throw new GraphImportError("nodes, edges, and audit must be arrays");
  }
  const nodes = doc.nodes.map(parseNode);
  const keys = new Set(nodes.map((node) => nodeKey(node.currency, node.level, node.id)));
  if (keys.size !== nodes.length) {
    throw new GraphImportError("duplicate node in file");
  }
  const edges = doc.edges.map((entry, i) => parseEdge(entry, i, keys));
  const annotations = parseAnnotations(doc.annotations, keys);
  const audit = doc.audit.map(parseAuditEntry);
  return { version: EXPORT_VERSION, nodes, edges, annotations, audit };
}

function parseNode(entry: unknown, index?: number): ExportedNode {
  const at = index === undefined ? "" : ` ${index}`;
  if (typeof entry !== "object" || entry === null) {
    throw new GraphImportError(`node${at} must be an object`);
  }
  const node = entry as Record<string, unknown>;
  if (typeof node.currency !== "string" || node.currency === "") {
    throw new GraphImportError(`node${at}: missing currency`);
  }
  if (node.level !== "address" && node.level !== "entity") {
    throw new GraphImportError(`node${at}: level must be 'address' or 'entity'`);
  }
  if (typeof node.id !== "string" || node.id === "") {
    throw new GraphImportError(`node${at}: missing id`);
  }
  const stats = node.stats ?? null;
  if (stats !== null && (typeof stats !== "object" || Array.isArray(stats))) {
    throw new GraphImportError(`node${at}: stats must be an object or null`);
  }
  const overlays = node.overlays ?? [];
  if (!Array.isArray(overlays) || overlays.some((o) => typeof o !== "string")) {
    throw new GraphImportError(`node${at}: overlays must be a list of strings`);
  }
  return {
    currency: node.currency,
    level: node.level,
    id: node.id,
    stats: stats as NodeStats | null,
    overlays: overlays as string[],
  };
}

function parseEdge(entry: unknown, index: number, keys: Set<string>): ExportedEdge {
  if (typeof entry !== "object" || entry === null) {
    throw new GraphImportError(`edge ${index} must be an object`);
  }
  const edge = entry as Record<string, unknown>;
  if (typeof edge.src !== "string" || typeof edge.dst !== "string") {
    throw new GraphImportError(`edge ${index}: src and dst must be node keys`);
  }
  if (!keys.has(edge.src) || !keys.has(edge.dst)) {
    throw new GraphImportError(`edge ${index}: endpoint not among nodes`);
  }
  if (typeof edge.estimated_value !== "number" || typeof edge.n_transactions !== "number") {
    throw new GraphImportError(`edge ${index}: missing numeric value fields`);
  }
  return {
    src: edge.src,
    dst: edge.dst,
    estimated_value: edge.estimated_value,
    n_transactions: edge.n_transactions,
  };
}

function parseAnnotations(raw: unknown, keys: Set<string>): Record<string, string> {
  if (raw === undefined || raw === null) {
    return {};
  }
  if (typeof raw !== "object" || Array.isArray(raw)) {
    throw new GraphImportError("annotations must be an object");
  }
  const out: Record<string, string> = {};
  for (const [key, value] of Object.entries(raw as Record<string, unknown>)) {
    if (!keys.has(key)) {
      throw new GraphImportError(`annotation on unknown node: ${key}`);
    }
    if (typeof value !== "string") {
      throw new GraphImportError(`annotation on ${key} must be a string`);
    }
    out[key] = value;
  }
  return out;
}

function parseAuditEntry(entry: unknown, index: number): AuditEntry {
  if (typeof entry !== "object" || entry === null) {
    throw new GraphImportError(`audit entry ${index} must be an object`);
  }
  const row = entry as Record<string, unknown>;
  if (typeof row.timestamp !== "string") {
    throw new GraphImportError(`audit entry ${index}: missing timestamp`);
  }
  if (typeof row.action !== "string" || !AUDIT_ACTIONS.includes(row.action)) {
    throw new GraphImportError(`audit entry ${index}: unknown action`);
  }
  const parameters = row.parameters ?? {};
  if (typeof parameters !== "object" || Array.isArray(parameters)) {
    throw new GraphImportError(`audit entry ${index}: parameters must be an object`);
  }
  return {
    timestamp: row.timestamp,
    action: row.action as AuditEntry["action"],
    parameters: parameters as Record<string, unknown>,
  };
}
