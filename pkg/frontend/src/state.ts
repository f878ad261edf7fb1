/** Viewer state and actions, independent of the DOM and renderer.
 *
 * Segment/refine responses are sequence-numbered: only the newest request's
 * result is ever applied, so a slow earlier response can never overwrite a
 * newer one. Parameter edits (slider drags) touch only `params`; the actual
 * request fires on commit (slider release, or immediately in auto mode).
 */

import {
    ApiClient,
    FieldParams,
    GeometryResult,
    SegmentResult,
} from "./api.js";

export type DisplayMode = "segments" | "heatmap";

export interface PanelParams {
    k: number;
    lambdaSmooth: number;
    smoothBoundaries: boolean;
    source: "oracle" | "model";
    rays: number;
    smoothIters: number;
    seed: number;
}

export interface HistoryEntry {
    k: number;
    lambdaSmooth: number;
    smoothBoundaries: boolean;
    partCount: number;
    energy: number;
    elapsedMs: number;
}

export interface ViewerState {
    meshId: string | null;
    faceCount: number;
    vertexCount: number;
    geometry: GeometryResult | null;
    fieldId: string | null;
    fieldValues: number[] | null;
    fieldRange: [number, number] | null;
    segId: string | null;
    labels: number[] | null;
    partCount: number;
    energy: number | null;
    displayMode: DisplayMode;
    selection: number | null;
    params: PanelParams;
    history: HistoryEntry[];
    busy: boolean;
    lastError: string | null;
}

const INITIAL_PARAMS: PanelParams = {
    k: 3,
    lambdaSmooth: 1.0,
    smoothBoundaries: false,
    source: "oracle",
    rays: 30,
    smoothIters: 2,
    seed: 0,
};

export function initialState(): ViewerState {
    return {
        meshId: null,
        faceCount: 0,
        vertexCount: 0,
        geometry: null,
        fieldId: null,
        fieldValues: null,
        fieldRange: null,
        segId: null,
        labels: null,
        partCount: 0,
        energy: null,
        displayMode: "heatmap",
        selection: null,
        params: { ...INITIAL_PARAMS },
        history: [],
        busy: false,
        lastError: null,
    };
}

export class ViewerStore {
    state: ViewerState = initialState();
    private segmentSeq = 0;

    constructor(
        private readonly api: ApiClient,
        private readonly onChange: (state: ViewerState) => void = () => {},
    ) {}

    private emit(): void {
        this.onChange(this.state);
    }

    private toast(message: string): void {
        this.state.lastError = message;
        this.emit();
    }

    async uploadMesh(body: ArrayBuffer | string): Promise<void> {
        this.state.busy = true;
        this.emit();
        try {
            const uploaded = await this.api.uploadMesh(body);
            const geometry = await this.api.geometry(uploaded.id);
            this.state = {
                ...initialState(),
                params: this.state.params,
                meshId: uploaded.id,
                faceCount: uploaded.faces,
                vertexCount: uploaded.vertices,
                geometry,
            };
            this.segmentSeq = 0;
        } catch (err) {
            this.state.busy = false;
            this.toast(`upload failed: ${(err as Error).message}`);
            return;
        }
        this.state.busy = false;
        this.emit();
    }

    /** "Compute ShDF": one field request; the heatmap becomes available. */
    async computeField(): Promise<void> {
        if (!this.state.meshId) {
            this.toast("upload a mesh first");
            return;
        }
        const params: FieldParams = {
            source: this.state.params.source,
            rays: this.state.params.rays,
            smooth_iters: this.state.params.smoothIters,
            seed: this.state.params.seed,
        };
        this.state.busy = true;
        this.emit();
        try {
            const field = await this.api.computeField(this.state.meshId, params);
            const values = await this.api.fieldValues(
                this.state.meshId,
                field.field_id,
            );
            this.state.fieldId = field.field_id;
            this.state.fieldValues = values.values;
            this.state.fieldRange = [field.stats.min, field.stats.max];
            this.state.displayMode = "heatmap";
        } catch (err) {
            this.toast(`field computation failed: ${(err as Error).message}`);
        } finally {
            this.state.busy = false;
            this.emit();
        }
    }

    /** Slider drags update parameters without issuing requests. */
    setParams(update: Partial<PanelParams>): void {
        this.state.params = { ...this.state.params, ...update };
        this.emit();
    }

    /** Slider release: exactly one segment request against the cached field. */
    async commitParams(): Promise<void> {
        if (!this.state.meshId || !this.state.fieldId) {
            this.toast("compute a field first");
            return;
        }
        const seq = ++this.segmentSeq;
        const p = this.state.params;
        this.state.busy = true;
        this.emit();
        let result: SegmentResult;
        try {
            result = await this.api.segment(this.state.meshId, {
                field_id: this.state.fieldId,
                k: p.k,
                lambda_smooth: p.lambdaSmooth,
                smooth_boundaries: p.smoothBoundaries,
                seed: p.seed,
            });
        } catch (err) {
            if (seq === this.segmentSeq) {
                this.state.busy = false;
                this.toast(`segmentation failed: ${(err as Error).message}`);
            }
            return;
        }
        if (seq !== this.segmentSeq) {
            return; // superseded by a newer request: discard silently
        }
        this.applySegmentation(result, p);
    }

    private applySegmentation(result: SegmentResult, p: PanelParams): void {
        this.state.segId = result.seg_id;
        this.state.labels = result.labels;
        this.state.partCount = result.part_count;
        this.state.energy = result.energy;
        this.state.displayMode = "segments";
        this.state.selection = null;
        this.state.busy = false;
        this.state.history = [
            ...this.state.history,
            {
                k: p.k,
                lambdaSmooth: p.lambdaSmooth,
                smoothBoundaries: p.smoothBoundaries,
                partCount: result.part_count,
                energy: result.energy,
                elapsedMs: result.elapsed_ms,
            },
        ];
        this.emit();
    }

    /** Click on a face selects its part (or clears with null). */
    selectFace(faceIndex: number | null): void {
        if (faceIndex === null || !this.state.labels) {
            this.state.selection = null;
        } else {
            this.state.selection = this.state.labels[faceIndex] ?? null;
        }
        this.emit();
    }

    /** Refine the selected part; the result replaces the segmentation. */
    async refineSelected(k: number): Promise<void> {
        const { meshId, segId, selection } = this.state;
        if (!meshId || !segId || selection === null) {
            this.toast("select a part first");
            return;
        }
        const seq = ++this.segmentSeq;
        this.state.busy = true;
        this.emit();
        try {
            const result = await this.api.refine(meshId, segId, {
                part: selection,
                k,
                seed: this.state.params.seed,
            });
            if (seq !== this.segmentSeq) {
                return;
            }
            this.applySegmentation(result, { ...this.state.params, k });
        } catch (err) {
            if (seq === this.segmentSeq) {
                this.state.busy = false;
                this.toast(`refine failed: ${(err as Error).message}`);
            }
        }
    }

    setDisplayMode(mode: DisplayMode): void {
        this.state.displayMode = mode;
        this.emit();
    }
}
