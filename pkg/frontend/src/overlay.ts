/** Importance-overlay rendering data: translucent heatmap per tile plus
 * outlines on foveal tiles, derived from server stats events. */

export interface OverlayCell {
  row: number;
  col: number;
  value: number;
  foveal: boolean;
}

export interface OverlayModel {
  rows: number;
  cols: number;
  cells: OverlayCell[];
}

export function buildOverlay(importance: number[][],
                             foveal: number[][] | null): OverlayModel {
  const rows = importance.length;
  const cols = rows ? importance[0].length : 0;
  const cells: OverlayCell[] = [];
  for (let r = 0; r < rows; r++) {
    for (let c = 0; c < cols; c++) {
      cells.push({
        row: r,
        col: c,
        value: importance[r][c],
        foveal: foveal ? foveal[r][c] !== 0 : false,
      });
    }
  }
  return { rows, cols, cells };
}

/** Heat color for an importance value in [0,1] (blue -> red, alpha 0.35). */
export function heatColor(value: number): string {
  const v = Math.min(Math.max(value, 0), 1);
  const red = Math.round(255 * v);
  const blue = Math.round(255 * (1 - v));
  return `rgba(${red}, 40, ${blue}, 0.35)`;
}
