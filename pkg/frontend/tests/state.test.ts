import { describe, expect, it } from "vitest";

import {
    ApiClient,
    FieldParams,
    RefineParams,
    RefineResult,
    SegmentParams,
    SegmentResult,
} from "../src/api.js";
import { ViewerStore } from "../src/state.js";

/** Mock transport: counts calls per endpoint and lets tests delay responses. */
class MockApi {
    counts = { upload: 0, shdf: 0, segment: 0, refine: 0 };
    segmentDelays: Array<Promise<void>> = [];
    segCounter = 0;
    lastPartCount = 0;

    uploadMesh(): Promise<unknown> {
        this.counts.upload += 1;
        return Promise.resolve({
            id: "mesh1",
            vertices: 8,
            faces: 12,
            manifold: {
                is_closed: true,
                boundary_edges: 0,
                non_manifold_edges: 0,
                euler_characteristic: 2,
            },
        });
    }

    geometry(): Promise<unknown> {
        return Promise.resolve({
            vertices: [[0, 0, 0], [1, 0, 0], [0, 1, 0]],
            faces: Array.from({ length: 12 }, () => [0, 1, 2]),
        });
    }

    computeField(_id: string, _p: FieldParams): Promise<unknown> {
        this.counts.shdf += 1;
        return Promise.resolve({
            field_id: "fieldA",
            stats: { faces: 12, min: 0.1, max: 0.9, mean: 0.5, shdf_computations: 1 },
            elapsed_ms: 5,
        });
    }

    fieldValues(): Promise<unknown> {
        return Promise.resolve({
            field_id: "fieldA",
            values: Array.from({ length: 12 }, (_, i) => 0.1 + (0.8 * i) / 11,),
        });
    }

    async segment(_id: string, params: SegmentParams): Promise<SegmentResult> {
        this.counts.segment += 1;
        const waitFor = this.segmentDelays.shift();
        if (waitFor) await waitFor;
        this.segCounter += 1;
        this.lastPartCount = params.k;
        return {
            seg_id: `seg${this.segCounter}`,
            labels: Array.from({ length: 12 }, (_, i) => i % params.k),
            part_count: params.k,
            energy: 1.0 / this.segCounter,
            elapsed_ms: 3,
        };
    }

    async refine(
        _id: string,
        segId: string,
        params: RefineParams,
    ): Promise<RefineResult> {
        this.counts.refine += 1;
        this.segCounter += 1;
        // a successful k-child refinement grows the part count by k - 1
        this.lastPartCount = this.lastPartCount + params.k - 1;
        return {
            seg_id: `seg${this.segCounter}`,
            labels: Array.from({ length: 12 }, (_, i) => i % this.lastPartCount),
            part_count: this.lastPartCount,
            energy: 0.5,
            elapsed_ms: 4,
            parent_seg_id: segId,
            parent_part: params.part,
        };
    }

    deleteMesh(): Promise<unknown> {
        return Promise.resolve({ deleted: "mesh1" });
    }
}

function makeStore() {
    const api = new MockApi();
    const store = new ViewerStore(api as unknown as ApiClient);
    return { api, store };
}

async function uploadAndField(store: ViewerStore) {
    await store.uploadMesh("solid data");
    await store.computeField();
}

describe("viewer store", () => {
    it("upload populates mesh state and geometry", async () => {
        const { store } = makeStore();
        await store.uploadMesh("mesh bytes");
        expect(store.state.meshId).toBe("mesh1");
        expect(store.state.faceCount).toBe(12);
        expect(store.state.geometry?.faces.length).toBe(12);
    });

    it("a k-slider change issues exactly one segment and zero shdf requests", async () => {
        const { api, store } = makeStore();
        await uploadAndField(store);
        expect(api.counts.shdf).toBe(1);

        store.setParams({ k: 4 });        // slider drag: no request
        expect(api.counts.segment).toBe(0);
        await store.commitParams();       // slider release
        expect(api.counts.segment).toBe(1);
        expect(api.counts.shdf).toBe(1);  // still the single field request
        expect(store.state.partCount).toBe(4);
    });

    it("part click + refine renders a strictly larger part count", async () => {
        const { store } = makeStore();
        await uploadAndField(store);
        store.setParams({ k: 3 });
        await store.commitParams();
        const before = store.state.partCount;

        store.selectFace(4);              // face 4 carries label 4 % 3 = 1
        expect(store.state.selection).toBe(1);
        await store.refineSelected(2);
        expect(store.state.partCount).toBeGreaterThan(before);
        expect(store.state.segId).not.toBeNull();
    });

    it("stale responses are discarded: only the newest result renders", async () => {
        const { api, store } = makeStore();
        await uploadAndField(store);

        let releaseFirst!: () => void;
        api.segmentDelays.push(
            new Promise<void>((resolve) => (releaseFirst = resolve)),
        );

        store.setParams({ k: 2 });
        const first = store.commitParams();   // delayed response
        store.setParams({ k: 5 });
        const second = store.commitParams();  // completes immediately
        await second;
        expect(store.state.partCount).toBe(5);

        releaseFirst();                        // the old response arrives late
        await first;
        expect(store.state.partCount).toBe(5); // still the newest result
        expect(api.counts.segment).toBe(2);
    });

    it("segment history records parameters and outcomes", async () => {
        const { store } = makeStore();
        await uploadAndField(store);
        store.setParams({ k: 2 });
        await store.commitParams();
        store.setParams({ k: 3, lambdaSmooth: 2.0 });
        await store.commitParams();
        expect(store.state.history.length).toBe(2);
        expect(store.state.history[1]).toMatchObject({ k: 3, lambdaSmooth: 2.0 });
        expect(store.state.history[0].partCount).toBe(2);
    });

    it("errors surface as toasts without clearing the scene", async () => {
        const { api, store } = makeStore();
        await uploadAndField(store);
        api.segment = () => Promise.reject(new Error("boom"));
        store.setParams({ k: 2 });
        await store.commitParams();
        expect(store.state.lastError).toContain("boom");
        expect(store.state.meshId).toBe("mesh1"); // scene intact
    });

    it("refine without a selection is a no-op with a hint", async () => {
        const { api, store } = makeStore();
        await uploadAndField(store);
        await store.refineSelected(2);
        expect(api.counts.refine).toBe(0);
        expect(store.state.lastError).toContain("select");
    });
});
