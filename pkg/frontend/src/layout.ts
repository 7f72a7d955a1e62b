/** Deterministic node placement: a plain grid walked in insertion order,
 * so an imported investigation re-renders exactly as it was exported. */

export interface Point {
  x: number;
  y: number;
}

export const CELL_WIDTH = 210;
export const CELL_HEIGHT = 170;
export const GRID_MARGIN = 120;
export const PER_ROW = 5;

export function layoutGraph(nodeKeys: string[]): Map<string, Point> {
  const positions = new Map<string, Point>();
  nodeKeys.forEach((key, index) => {
    const column = index % PER_ROW;
    const row = Math.floor(index / PER_ROW);
    positions.set(key, {
      x: GRID_MARGIN + column * CELL_WIDTH,
      y: GRID_MARGIN + row * CELL_HEIGHT,
    });
  });
  return positions;
}

export function canvasSize(nodeCount: number): { width: number; height: number } {
  const rows = Math.max(1, Math.ceil(nodeCount / PER_ROW));
  const columns = Math.max(1, Math.min(nodeCount, PER_ROW));
  return {
    width: 2 * GRID_MARGIN + (columns - 1) * CELL_WIDTH,
    height: 2 * GRID_MARGIN + (rows - 1) * CELL_HEIGHT,
  };
}
