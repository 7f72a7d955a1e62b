/** SVG rendering of the investigation graph. Pure string construction:
 * the same snapshot and layout always produce the same markup. Entity
 * nodes carry address-count and label-coherence badges; address nodes
 * carry balance and activity-period badges. */

import type { GraphEdge, GraphNode, GraphSnapshot } from "./graph.js";
import type { Point } from "./layout.js";
import { canvasSize, layoutGraph } from "./layout.js";
import type { AddressStats, EntityStats } from "./types.js";

const NODE_WIDTH = 150;
const NODE_HEIGHT = 64;

export function renderSvg(snapshot: GraphSnapshot, selectedKey?: string): string {
  const positions = layoutGraph(snapshot.nodes.map((node) => node.key));
  const { width, height } = canvasSize(snapshot.nodes.length);
  const parts: string[] = [];
  parts.push(
    `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}" ` +
      `viewBox="0 0 ${width} ${height}" font-family="monospace" font-size="11">`,
  );
  parts.push(
    "<defs><marker id=\"arrow\" viewBox=\"0 0 10 10\" refX=\"9\" refY=\"5\" " +
      "markerWidth=\"7\" markerHeight=\"7\" orient=\"auto-start-reverse\">" +
      "<path d=\"M 0 0 L 10 5 L 0 10 z\" fill=\"#555\"/></marker></defs>",
  );
  parts.push('<g class="edges">');
  for (const edge of snapshot.edges) {
    parts.push(renderEdge(edge, positions));
  }
  parts.push("</g>");
  parts.push('<g class="nodes">');
  for (const node of snapshot.nodes) {
    const at = positions.get(node.key) as Point;
    parts.push(renderNode(node, at, node.key === selectedKey));
  }
  parts.push("</g>");
  parts.push("</svg>");
  return parts.join("");
}

function renderEdge(edge: GraphEdge, positions: Map<string, Point>): string {
  const from = positions.get(edge.src);
  const to = positions.get(edge.dst);
  if (from === undefined || to === undefined) {
    return "";
  }
  const midX = (from.x + to.x) / 2;
  const midY = (from.y + to.y) / 2 - 6;
  const label = `${formatCoins(edge.estimatedValue)} / ${edge.nTransactions} tx`;
  return (
    `<g class="edge"><line x1="${from.x}" y1="${from.y}" x2="${to.x}" y2="${to.y}" ` +
      'stroke="#555" stroke-width="1.2" marker-end="url(#arrow)"/>' +
      `<text x="${midX}" y="${midY}" text-anchor="middle" fill="#333">${escapeXml(label)}</text></g>`
  );
}

function renderNode(node: GraphNode, at: Point, selected: boolean): string {
  const x = at.x - NODE_WIDTH / 2;
  const y = at.y - NODE_HEIGHT / 2;
  const fill = node.level === "entity" ? "#dbe9ff" : "#e7f6e7";
  const stroke = selected ? "#d4541c" : "#4a6785";
  const title = node.level === "entity" ? `e${node.id}` : truncate(node.id, 18);
  const lines = [escapeXml(title), ...badges(node)];
  if (node.overlays.length > 0) {
    lines.push(escapeXml(`tag: ${node.overlays.join(", ")}`));
  }
  if (node.annotation !== null) {
    lines.push(escapeXml(`note: ${truncate(node.annotation, 24)}`));
  }
  const extra = Math.max(0, lines.length - 3) * 12;
  const text = lines
    .map((line, i) => `<tspan x="${at.x}" dy="${i === 0 ? 0 : 12}">${line}</tspan>`)
    .join("");
  return (
    `<g class="node ${node.level}" data-key="${escapeXml(node.key)}">` +
      `<rect x="${x}" y="${y - extra / 2}" width="${NODE_WIDTH}" height="${NODE_HEIGHT + extra}" ` +
      `rx="8" fill="${fill}" stroke="${stroke}" stroke-width="${selected ? 2.5 : 1.2}"/>` +
      `<text x="${at.x}" y="${y + 16 - extra / 2}" text-anchor="middle">${text}</text></g>`
  );
}

function badges(node: GraphNode): string[] {
  if (node.stats === null) {
    return ["(no stats)"];
  }
  if (node.level === "entity") {
    const stats = node.stats as EntityStats;
    const coherence =
      stats.tag_coherence === undefined ? "coherence: -" : `coherence: ${stats.tag_coherence.toFixed(2)}`;
    return [escapeXml(`addresses: ${stats.n_addresses}`), escapeXml(coherence)];
  }
  const stats = node.stats as AddressStats;
  return [
    escapeXml(`balance: ${formatCoins(stats.balance)}`),
    escapeXml(`active: ${formatDays(stats.activity_period)}`),
  ];
}

/** Base units to coin display with up to 8 decimals, trailing zeros cut. */
export function formatCoins(baseUnits: number): string {
  const sign = baseUnits < 0 ? "-" : "";
  const magnitude = Math.abs(baseUnits);
  const whole = Math.floor(magnitude / 1e8);
  const fraction = Math.round(magnitude % 1e8);
  if (fraction === 0) {
    return `${sign}${whole}`;
  }
  const digits = String(fraction).padStart(8, "0").replace(/0+$/, "");
  return `${sign}${whole}.${digits}`;
}

function formatDays(seconds: number): string {
  return `${Math.round(seconds / 86400)}d`;
}

function truncate(text: string, max: number): string {
  return text.length <= max ? text : `${text.slice(0, max - 1)}~`;
}

export function escapeXml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&apos;");
}
