/** Preview decimation for very large meshes.
 *
 * Above the face budget the viewer renders an evenly strided subset of
 * faces and shows a banner; picking and coloring still refer to original
 * face indices through the returned map.
 */

export const PREVIEW_FACE_BUDGET = 500_000;

export interface Decimation {
    faces: number[][];
    /** original face index per preview triangle */
    faceMap: number[];
    decimated: boolean;
}

export function decimateForPreview(
    faces: number[][],
    budget: number = PREVIEW_FACE_BUDGET,
): Decimation {
    if (faces.length <= budget) {
        return {
            faces,
            faceMap: faces.map((_, i) => i),
            decimated: false,
        };
    }
    const stride = faces.length / budget;
    const picked: number[][] = [];
    const faceMap: number[] = [];
    for (let k = 0; k < budget; k++) {
        const index = Math.min(faces.length - 1, Math.floor(k * stride));
        picked.push(faces[index]);
        faceMap.push(index);
    }
    return { faces: picked, faceMap, decimated: true };
}

/** Gather per-face colors (3 floats each) into preview order. */
export function gatherPreviewColors(
    perFace: Float32Array,
    faceMap: number[],
): Float32Array {
    const out = new Float32Array(faceMap.length * 3);
    for (let i = 0; i < faceMap.length; i++) {
        const src = faceMap[i] * 3;
        out[3 * i] = perFace[src];
        out[3 * i + 1] = perFace[src + 1];
        out[3 * i + 2] = perFace[src + 2];
    }
    return out;
}
