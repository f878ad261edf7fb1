/** Color assignment: stable per-part hues and a field heatmap. */

export type Rgb = [number, number, number];

/** Stable color for a part id: the id hashes to a golden-ratio hue, so a
 * part keeps its color across re-renders and unrelated label changes. */
export function partColor(partId: number): Rgb {
    const hue = (partId * 0.61803398875) % 1.0;
    return hsvToRgb(hue, 0.65, 0.95);
}

export function hsvToRgb(h: number, s: number, v: number): Rgb {
    const i = Math.floor(h * 6) % 6;
    const f = h * 6 - Math.floor(h * 6);
    const p = v * (1 - s);
    const q = v * (1 - f * s);
    const t = v * (1 - (1 - f) * s);
    const pick: Rgb[] = [
        [v, t, p],
        [q, v, p],
        [p, v, t],
        [p, q, v],
        [t, p, v],
        [v, p, q],
    ];
    return pick[i];
}

/** Blue -> cyan -> yellow -> red ramp over t in [0, 1]. */
export function heatmapColor(t: number): Rgb {
    const x = Math.min(1, Math.max(0, t));
    if (x < 1 / 3) {
        const u = x * 3;
        return [0, u, 1];
    }
    if (x < 2 / 3) {
        const u = (x - 1 / 3) * 3;
        return [u, 1, 1 - u];
    }
    const u = (x - 2 / 3) * 3;
    return [1, 1 - u, 0];
}

export interface Legend {
    min: number;
    max: number;
}

/** Legend endpoints are exactly the field's min and max. */
export function heatmapLegend(values: number[]): Legend {
    let min = Infinity;
    let max = -Infinity;
    for (const v of values) {
        if (v < min) min = v;
        if (v > max) max = v;
    }
    return { min, max };
}

const HIGHLIGHT: Rgb = [1.0, 1.0, 1.0];

/** Per-face colors describing the current view, 3 floats per face.
 *
 * Segments mode: stable part colors, the selected part highlighted.
 * Heatmap mode: field values normalized by the legend endpoints.
 */
export function faceColors(
    mode: "segments" | "heatmap",
    labels: number[] | null,
    values: number[] | null,
    selection: number | null,
    faceCount: number,
): Float32Array {
    const out = new Float32Array(faceCount * 3);
    for (let f = 0; f < faceCount; f++) {
        let rgb: Rgb = [0.62, 0.62, 0.66];
        if (mode === "segments" && labels) {
            const part = labels[f];
            rgb = selection !== null && part === selection
                ? HIGHLIGHT
                : partColor(part);
        } else if (mode === "heatmap" && values) {
            const { min, max } = cachedLegend(values);
            const t = max > min ? (values[f] - min) / (max - min) : 0;
            rgb = heatmapColor(t);
        }
        out[3 * f] = rgb[0];
        out[3 * f + 1] = rgb[1];
        out[3 * f + 2] = rgb[2];
    }
    return out;
}

let legendCacheFor: number[] | null = null;
let legendCache: Legend = { min: 0, max: 1 };

function cachedLegend(values: number[]): Legend {
    if (values !== legendCacheFor) {
        legendCacheFor = values;
        legendCache = heatmapLegend(values);
    }
    return legendCache;
}
