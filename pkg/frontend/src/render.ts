/**
 * Tile rendering. The canvas painter draws from a sprite atlas: a PNG
 * arranged as a grid of equal-size sprites plus an index map (JSON)
 * from tile id to atlas cell; when the PNG is missing it falls back to
 * the index map's colors. Unknown tile ids paint a placeholder and log
 * one diagnostic; mid-experiment rendering never throws.
 */

import type { ObservationPayload } from "./protocol.js";

export interface TileSpec {
  cell?: [number, number];
  color: string;
  glyph?: string;
}

/** Tile ids are scoped per environment kind; each kind gets its own
 * sprite table inside one atlas file. */
export interface AtlasIndex {
  sprite_px: number;
  envs: Record<string, Record<string, TileSpec>>;
}

const PLACEHOLDER_COLOR = "#ff00ff";

export class CanvasRenderer {
  private warned = new Set<string>();

  constructor(
    private readonly canvas: HTMLCanvasElement,
    private readonly atlas: AtlasIndex,
    private readonly sheet: HTMLImageElement | null,
    private readonly cellPx = 48,
  ) {}

  draw(obs: ObservationPayload, envKind: string): void {
    const ctx = this.canvas.getContext("2d");
    if (!ctx) return;
    const tiles = this.atlas.envs[envKind] ?? {};
    const rows = obs.grid.length;
    const cols = rows ? obs.grid[0].length : 0;
    this.canvas.width = cols * this.cellPx;
    this.canvas.height = rows * this.cellPx;
    for (let r = 0; r < rows; r++) {
      for (let c = 0; c < cols; c++) {
        this.drawTile(ctx, tiles, envKind, obs.grid[r][c], c * this.cellPx, r * this.cellPx);
      }
    }
  }

  private drawTile(
    ctx: CanvasRenderingContext2D,
    tiles: Record<string, TileSpec>,
    envKind: string,
    tile: number,
    x: number,
    y: number,
  ): void {
    const spec = tiles[String(tile)];
    if (!spec) {
      const key = `${envKind}/${tile}`;
      if (!this.warned.has(key)) {
        this.warned.add(key);
        console.warn(`unknown tile id ${tile} for ${envKind}; painting placeholder`);
      }
      ctx.fillStyle = PLACEHOLDER_COLOR;
      ctx.fillRect(x, y, this.cellPx, this.cellPx);
      return;
    }
    if (this.sheet && spec.cell) {
      const s = this.atlas.sprite_px;
      ctx.drawImage(
        this.sheet, spec.cell[1] * s, spec.cell[0] * s, s, s, x, y, this.cellPx, this.cellPx,
      );
      return;
    }
    ctx.fillStyle = spec.color;
    ctx.fillRect(x, y, this.cellPx, this.cellPx);
    if (spec.glyph) {
      ctx.fillStyle = "#111";
      ctx.font = `${Math.floor(this.cellPx * 0.6)}px monospace`;
      ctx.textAlign = "center";
      ctx.textBaseline = "middle";
      ctx.fillText(spec.glyph, x + this.cellPx / 2, y + this.cellPx / 2);
    }
  }
}

export async function loadAtlas(baseUrl: string): Promise<{ atlas: AtlasIndex; sheet: HTMLImageElement | null }> {
  const atlas: AtlasIndex = await (await fetch(`${baseUrl}/atlas.json`)).json();
  const sheet = await new Promise<HTMLImageElement | null>((resolve) => {
    const img = new Image();
    img.onload = () => resolve(img);
    img.onerror = () => resolve(null); // color fallback
    img.src = `${baseUrl}/atlas.png`;
  });
  return { atlas, sheet };
}
