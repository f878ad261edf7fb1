import { describe, expect, it } from "vitest";

import {
    faceColors,
    heatmapColor,
    heatmapLegend,
    partColor,
} from "../src/colors.js";

describe("part colors", () => {
    it("are stable across calls", () => {
        const first = partColor(7);
        expect(partColor(7)).toEqual(first);
        expect(partColor(7)).toEqual(first);
    });

    it("are distinct for a realistic part count", () => {
        const seen = new Set(
            Array.from({ length: 24 }, (_, i) => partColor(i).join(",")),
        );
        expect(seen.size).toBe(24);
    });

    it("do not depend on other labels present", () => {
        // color is a pure function of the id: relabeling elsewhere never
        // shifts an unchanged part's color
        const before = faceColors("segments", [0, 1, 2], null, null, 3);
        const after = faceColors("segments", [0, 1, 5], null, null, 3);
        expect([...after.slice(0, 6)]).toEqual([...before.slice(0, 6)]);
    });
});

describe("heatmap", () => {
    it("legend endpoints equal the field min/max", () => {
        const legend = heatmapLegend([0.31, 0.77, 0.12, 0.55]);
        expect(legend.min).toBe(0.12);
        expect(legend.max).toBe(0.77);
    });

    it("ramp endpoints are blue and red", () => {
        expect(heatmapColor(0)).toEqual([0, 0, 1]);
        expect(heatmapColor(1)).toEqual([1, 0, 0]);
    });

    it("face colors normalize by the legend", () => {
        const values = [0.2, 0.5, 0.8];
        const colors = faceColors("heatmap", null, values, null, 3);
        expect([...colors.slice(0, 3)]).toEqual(heatmapColor(0));
        expect([...colors.slice(6, 9)]).toEqual(heatmapColor(1));
    });

    it("selected part is highlighted in segments mode", () => {
        const colors = faceColors("segments", [0, 1], null, 1, 2);
        expect([...colors.slice(3, 6)]).toEqual([1, 1, 1]);
        const expected = partColor(0);
        for (let c = 0; c < 3; c++) {
            expect(colors[c]).toBeCloseTo(expected[c], 6); // float32 storage
        }
    });
});
