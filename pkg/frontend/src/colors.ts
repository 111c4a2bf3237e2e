/** Bivariate density color scale and scalar colormap for view backgrounds.
 *
 * Two normalized densities a (green role, horizontal) and b (blue role,
 * vertical) compose into one display color: luminance falls as a + b
 * grows, hue leans green where a dominates and blue where b dominates,
 * and near-equal intensities desaturate toward gray.  The scale is an
 * 8 x 8 lookup; swapping the inputs exchanges green and blue hues while
 * keeping luminance and saturation, exactly.
 */

export interface Rgb {
  r: number; // 0..255 integers
  g: number;
  b: number;
}

export const LUT_SIZE = 8;

export const GREEN_HUE = 120;
export const BLUE_HUE = 220;

function hslToRgb(h: number, s: number, l: number): Rgb {
  const c = (1 - Math.abs(2 * l - 1)) * s;
  const hp = (((h % 360) + 360) % 360) / 60;
  const x = c * (1 - Math.abs((hp % 2) - 1));
  let r = 0;
  let g = 0;
  let b = 0;
  if (hp < 1) [r, g, b] = [c, x, 0];
  else if (hp < 2) [r, g, b] = [x, c, 0];
  else if (hp < 3) [r, g, b] = [0, c, x];
  else if (hp < 4) [r, g, b] = [0, x, c];
  else if (hp < 5) [r, g, b] = [x, 0, c];
  else [r, g, b] = [c, 0, x];
  const m = l - c / 2;
  return {
    r: Math.round(255 * (r + m)),
    g: Math.round(255 * (g + m)),
    b: Math.round(255 * (b + m)),
  };
}

/** Saturation and lightness shared by a cell and its swapped twin. */
function cellShade(a: number, b: number): { s: number; l: number } {
  // luminance: strictly decreasing in a + b; steep to mid-dark at a + b = 1,
  // then gently on toward dark gray at full overlap
  const t = (a + b) / 2;
  const l = t <= 0.5 ? 0.95 - 1.24 * t : 0.33 - 0.26 * (t - 0.5);
  // dominance: 0 on the diagonal (gray), 1 at a pure single feature
  const sum = a + b;
  const u = sum > 0 ? Math.abs(a - b) / sum : 0;
  const s = 0.8 * Math.pow(u, 0.7);
  return { s, l };
}

function buildLut(): Rgb[][] {
  const lut: Rgb[][] = [];
  for (let i = 0; i < LUT_SIZE; i++) {
    lut.push(new Array<Rgb>(LUT_SIZE));
  }
  // fill each swap-pair from one shade so the green/blue exchange is the
  // only difference between a cell and its transpose
  for (let i = 0; i < LUT_SIZE; i++) {
    for (let j = 0; j <= i; j++) {
      const { s, l } = cellShade(i / (LUT_SIZE - 1), j / (LUT_SIZE - 1));
      lut[i][j] = hslToRgb(GREEN_HUE, s, l);
      lut[j][i] = hslToRgb(BLUE_HUE, s, l);
    }
  }
  return lut;
}

export function rgbToHsl(c: Rgb): { h: number; s: number; l: number } {
  const r = c.r / 255;
  const g = c.g / 255;
  const b = c.b / 255;
  const max = Math.max(r, g, b);
  const min = Math.min(r, g, b);
  const l = (max + min) / 2;
  const d = max - min;
  if (d === 0) return { h: 0, s: 0, l };
  const s = d / (1 - Math.abs(2 * l - 1));
  let h: number;
  if (max === r) h = 60 * (((g - b) / d) % 6);
  else if (max === g) h = 60 * ((b - r) / d + 2);
  else h = 60 * ((r - g) / d + 4);
  return { h: ((h % 360) + 360) % 360, s, l };
}

const LUT = buildLut();

/** The precomputed 8 x 8 scale; LUT[i][j] composes a = i/7 with b = j/7. */
export function bivariateLut(): ReadonlyArray<ReadonlyArray<Rgb>> {
  return LUT;
}

/** Compose two max-normalized densities into a display color. */
export function composeBivariate(aNorm: number, bNorm: number): Rgb {
  const a = Math.min(1, Math.max(0, aNorm));
  const b = Math.min(1, Math.max(0, bNorm));
  const i = Math.round(a * (LUT_SIZE - 1));
  const j = Math.round(b * (LUT_SIZE - 1));
  return LUT[i][j];
}

export function cssColor(c: Rgb): string {
  return `rgb(${c.r},${c.g},${c.b})`;
}

/** Relative luminance (BT.709 weights) of an sRGB color, in [0, 1]. */
export function luminance(c: Rgb): number {
  return (0.2126 * c.r + 0.7152 * c.g + 0.0722 * c.b) / 255;
}

/**
 * Single-density colormap (light to dark green) for one-label heatmaps;
 * the green half of the bivariate scale.
 */
export function monoGreen(aNorm: number): Rgb {
  return composeBivariate(aNorm, 0);
}

/** Light-to-dark sequential map for scalar backgrounds (variance views). */
export function scalarColor(vNorm: number): Rgb {
  const v = Math.min(1, Math.max(0, vNorm));
  const l = 0.97 - 0.55 * v;
  return hslToRgb(28, 0.85 * v, l);
}
