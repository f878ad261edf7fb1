import { describe, expect, it } from "vitest";

import { decimateForPreview, gatherPreviewColors } from "../src/decimate.js";

function fakeFaces(n: number): number[][] {
    return Array.from({ length: n }, (_, i) => [i, i + 1, i + 2]);
}

describe("preview decimation", () => {
    it("passes small meshes through untouched", () => {
        const faces = fakeFaces(100);
        const out = decimateForPreview(faces, 500);
        expect(out.decimated).toBe(false);
        expect(out.faces).toBe(faces);
        expect(out.faceMap[42]).toBe(42);
    });

    it("strides large meshes down to the budget", () => {
        const faces = fakeFaces(10_000);
        const out = decimateForPreview(faces, 1000);
        expect(out.decimated).toBe(true);
        expect(out.faces.length).toBe(1000);
        // the map points at real, increasing original indices
        expect(out.faceMap[0]).toBe(0);
        for (let i = 1; i < out.faceMap.length; i++) {
            expect(out.faceMap[i]).toBeGreaterThan(out.faceMap[i - 1]);
        }
        expect(out.faceMap[out.faceMap.length - 1]).toBeLessThan(10_000);
        // each preview face is the original at its mapped index
        expect(out.faces[500]).toEqual(faces[out.faceMap[500]]);
    });

    it("gathers per-face colors into preview order", () => {
        const colors = new Float32Array([0, 0, 0, 1, 1, 1, 2, 2, 2, 3, 3, 3]);
        const gathered = gatherPreviewColors(colors, [3, 1]);
        expect([...gathered]).toEqual([3, 3, 3, 1, 1, 1]);
    });
});
