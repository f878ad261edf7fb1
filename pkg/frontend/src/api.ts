/** Typed client for the segmentation service. */

export interface ManifoldInfo {
    is_closed: boolean;
    boundary_edges: number;
    non_manifold_edges: number;
    euler_characteristic: number;
}

export interface UploadResult {
    id: string;
    vertices: number;
    faces: number;
    manifold: ManifoldInfo;
}

export interface FieldParams {
    source: "oracle" | "model";
    model_path?: string;
    rays?: number;
    half_angle_deg?: number;
    smooth_iters?: number;
    seed?: number;
}

export interface FieldResult {
    field_id: string;
    stats: {
        faces: number;
        min: number;
        max: number;
        mean: number;
        shdf_computations: number;
    };
    elapsed_ms: number;
}

export interface SegmentParams {
    field_id: string;
    k: number;
    lambda_smooth: number;
    smooth_boundaries?: boolean;
    min_part_faces?: number;
    seed?: number;
}

export interface SegmentResult {
    seg_id: string;
    labels: number[];
    part_count: number;
    energy: number;
    elapsed_ms: number;
    stats?: { shdf_computations: number };
}

export interface RefineParams {
    part: number;
    k: number;
    lambda_smooth?: number;
    min_part_faces?: number;
    seed?: number;
}

export interface RefineResult extends SegmentResult {
    parent_seg_id: string;
    parent_part: number;
}

export interface GeometryResult {
    vertices: number[][];
    faces: number[][];
}

export interface FieldValuesResult {
    field_id: string;
    values: number[];
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
    constructor(message: string, readonly status: number) {
        super(message);
    }
}

export class ApiClient {
    constructor(
        private readonly baseUrl: string,
        private readonly fetchFn: FetchLike = (u, i) => fetch(u, i),
    ) {}

    private async request<T>(path: string, init?: RequestInit): Promise<T> {
        const response = await this.fetchFn(`${this.baseUrl}${path}`, init);
        const body = await response.json().catch(() => ({}));
        if (!response.ok) {
            const message =
                body?.error ??
                (typeof body?.detail === "string"
                    ? body.detail
                    : JSON.stringify(body?.detail ?? body));
            throw new ApiError(message || `HTTP ${response.status}`, response.status);
        }
        return body as T;
    }

    private post<T>(path: string, payload: unknown): Promise<T> {
        return this.request<T>(path, {
            method: "POST",
            headers: { "content-type": "application/json" },
            body: JSON.stringify(payload),
        });
    }

    uploadMesh(body: ArrayBuffer | string): Promise<UploadResult> {
        return this.request<UploadResult>("/meshes", {
            method: "POST",
            headers: { "content-type": "application/octet-stream" },
            body,
        });
    }

    computeField(meshId: string, params: FieldParams): Promise<FieldResult> {
        return this.post(`/meshes/${meshId}/shdf`, params);
    }

    segment(meshId: string, params: SegmentParams): Promise<SegmentResult> {
        return this.post(`/meshes/${meshId}/segment`, params);
    }

    refine(
        meshId: string,
        segId: string,
        params: RefineParams,
    ): Promise<RefineResult> {
        return this.post(`/meshes/${meshId}/segments/${segId}/refine`, params);
    }

    geometry(meshId: string): Promise<GeometryResult> {
        return this.request(`/meshes/${meshId}/geometry`);
    }

    fieldValues(meshId: string, fieldId: string): Promise<FieldValuesResult> {
        return this.request(`/meshes/${meshId}/fields/${fieldId}`);
    }

    deleteMesh(meshId: string): Promise<{ deleted: string }> {
        return this.request(`/meshes/${meshId}`, { method: "DELETE" });
    }
}
