/** Browser wiring: connects the DOM controls to one Investigation. All
 * server traffic goes through the GET-only client; everything the user
 * types stays in this page until they download it themselves. */

import { ApiClient, ApiError } from "./client.js";
import { Investigation } from "./session.js";
import { renderSvg } from "./render.js";
import type { Direction } from "./types.js";

function el<T extends HTMLElement>(id: string): T {
  const found = document.getElementById(id);
  if (found === null) {
    throw new Error(`missing element #${id}`);
  }
  return found as T;
}

let session: Investigation | null = null;
let selectedKey: string | null = null;

const status = el<HTMLElement>("status");
const canvas = el<HTMLElement>("canvas");
const results = el<HTMLElement>("results");

function say(message: string): void {
  status.textContent = message;
}

function need(): Investigation {
  if (session === null) {
    throw new Error("connect to a service first");
  }
  return session;
}

function redraw(): void {
  if (session === null) {
    return;
  }
  canvas.innerHTML = renderSvg(session.graph.snapshot(), selectedKey ?? undefined);
}

function surface(error: unknown): void {
  if (error instanceof ApiError) {
    say(`service error (${error.code}): ${error.message}`);
  } else {
    say(String(error instanceof Error ? error.message : error));
  }
}

function connect(): void {
  const base = el<HTMLInputElement>("base-url").value.trim();
  const currency = el<HTMLInputElement>("currency").value.trim().toLowerCase();
  if (base === "" || currency === "") {
    say("service URL and currency are required");
    return;
  }
  session = new Investigation(new ApiClient(base), currency);
  selectedKey = null;
  results.innerHTML = "";
  redraw();
  say(`connected to ${base} (${currency})`);
}

async function runSearch(): Promise<void> {
  const q = el<HTMLInputElement>("query").value.trim();
  try {
    const found = await need().search(q);
    results.innerHTML = "";
    for (const address of found.addresses) {
      const item = document.createElement("li");
      const link = document.createElement("a");
      link.href = "#";
      link.textContent = `address ${address}`;
      link.addEventListener("click", (event) => {
        event.preventDefault();
        void showAddress(address);
      });
      item.appendChild(link);
      results.appendChild(item);
    }
    for (const hash of found.transactions) {
      const item = document.createElement("li");
      item.textContent = `tx ${hash}`;
      results.appendChild(item);
    }
    for (const label of found.labels) {
      const item = document.createElement("li");
      item.textContent = `label ${label}`;
      results.appendChild(item);
    }
    say(
      `${found.addresses.length} addresses, ${found.transactions.length} transactions, ` +
        `${found.labels.length} labels`,
    );
  } catch (error) {
    surface(error);
  }
}

async function showAddress(address: string): Promise<void> {
  try {
    selectedKey = await need().showAddress(address);
    redraw();
    say(`showing ${selectedKey}`);
  } catch (error) {
    surface(error);
  }
}

async function expandSelected(direction: Direction): Promise<void> {
  if (selectedKey === null) {
    say("select a node first");
    return;
  }
  try {
    const result = await need().expand(selectedKey, direction);
    redraw();
    say(`added ${result.addedNodes.length} nodes, ${result.addedEdges.length} edges`);
  } catch (error) {
    surface(error);
  }
}

async function showEntityOfSelected(): Promise<void> {
  const current = selectedKey;
  if (current === null || session === null) {
    say("select an address first");
    return;
  }
  const node = session.graph.node(current);
  if (node.level !== "address") {
    say("select an address first");
    return;
  }
  try {
    const stats = node.stats as { entity_id: number } | null;
    if (stats === null) {
      say("address has no stats");
      return;
    }
    selectedKey = await session.showEntity(stats.entity_id);
    redraw();
    say(`showing ${selectedKey}`);
  } catch (error) {
    surface(error);
  }
}

function annotateSelected(): void {
  if (selectedKey === null) {
    say("select a node first");
    return;
  }
  const text = el<HTMLInputElement>("note").value;
  try {
    need().annotate(selectedKey, text);
    redraw();
    say("annotation saved locally");
  } catch (error) {
    surface(error);
  }
}

function importTags(): void {
  const text = el<HTMLTextAreaElement>("tag-input").value;
  try {
    const result = need().importTags(text);
    redraw();
    say(`imported tags; ${result.matched} matched displayed addresses`);
  } catch (error) {
    surface(error);
  }
}

function importGraphFile(): void {
  const text = el<HTMLTextAreaElement>("tag-input").value;
  try {
    const result = need().importGraph(text);
    redraw();
    say(`imported ${result.nodes} nodes and ${result.edges} edges`);
  } catch (error) {
    surface(error);
  }
}

function download(name: string, content: string): void {
  const blob = new Blob([content], { type: "application/json" });
  const url = URL.createObjectURL(blob);
  const link = document.createElement("a");
  link.href = url;
  link.download = name;
  link.click();
  URL.revokeObjectURL(url);
}

function exportGraph(): void {
  try {
    download("investigation.json", need().exportGraph());
    say("investigation exported");
  } catch (error) {
    surface(error);
  }
}

function downloadAudit(): void {
  try {
    download("audit.json", JSON.stringify(need().audit.list(), null, 2));
    say("audit log downloaded");
  } catch (error) {
    surface(error);
  }
}

canvas.addEventListener("click", (event) => {
  const target = (event.target as Element).closest("[data-key]");
  if (target !== null) {
    selectedKey = target.getAttribute("data-key");
    redraw();
    say(`selected ${selectedKey}`);
  }
});

el<HTMLButtonElement>("connect").addEventListener("click", connect);
el<HTMLButtonElement>("search").addEventListener("click", () => void runSearch());
el<HTMLButtonElement>("expand-out").addEventListener("click", () => void expandSelected("out"));
el<HTMLButtonElement>("expand-in").addEventListener("click", () => void expandSelected("in"));
el<HTMLButtonElement>("show-entity").addEventListener("click", () => void showEntityOfSelected());
el<HTMLButtonElement>("annotate").addEventListener("click", annotateSelected);
el<HTMLButtonElement>("import-tags").addEventListener("click", importTags);
el<HTMLButtonElement>("import-graph").addEventListener("click", importGraphFile);
el<HTMLButtonElement>("export-graph").addEventListener("click", exportGraph);
el<HTMLButtonElement>("download-audit").addEventListener("click", downloadAudit);

say("not connected");
