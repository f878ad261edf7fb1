/** DOM wiring: upload, parameter panel, picking, history, toasts. */

import { ApiClient } from "./api.js";
import { faceColors, heatmapLegend } from "./colors.js";
import { decimateForPreview, gatherPreviewColors } from "./decimate.js";
import { MeshView } from "./render.js";
import { ViewerState, ViewerStore } from "./state.js";

const AUTO_MODE_FACE_LIMIT = 20_000;

let previewFaceMap: number[] | null = null;

function el<T extends HTMLElement>(id: string): T {
    const found = document.getElementById(id);
    if (!found) throw new Error(`missing element #${id}`);
    return found as T;
}

const apiBase =
    new URLSearchParams(window.location.search).get("api") ??
    "http://127.0.0.1:8008";

const view = new MeshView(el<HTMLCanvasElement>("viewport"));
const store = new ViewerStore(new ApiClient(apiBase), render);

let toastTimer: number | undefined;

function render(state: ViewerState): void {
    el("mesh-stats").textContent = state.meshId
        ? `${state.faceCount} faces / ${state.vertexCount} vertices`
        : "no mesh";
    el("seg-stats").textContent = state.segId
        ? `${state.partCount} parts, energy ${state.energy?.toFixed(3)}`
        : state.fieldId
          ? "field ready"
          : "";
    el("busy").style.visibility = state.busy ? "visible" : "hidden";
    el<HTMLButtonElement>("refine").disabled = state.selection === null;
    el("selection").textContent =
        state.selection === null ? "" : `part ${state.selection} selected`;

    if (state.fieldRange && state.displayMode === "heatmap") {
        const legend = state.fieldValues
            ? heatmapLegend(state.fieldValues)
            : { min: state.fieldRange[0], max: state.fieldRange[1] };
        el("legend").textContent =
            `field ${legend.min.toFixed(3)} .. ${legend.max.toFixed(3)}`;
    } else {
        el("legend").textContent = "";
    }

    if (state.lastError) {
        const toast = el("toast");
        toast.textContent = state.lastError;
        toast.style.opacity = "1";
        window.clearTimeout(toastTimer);
        toastTimer = window.setTimeout(() => (toast.style.opacity = "0"), 4000);
        state.lastError = null;
    }

    const history = el("history");
    history.innerHTML = "";
    for (const entry of [...store.state.history].reverse()) {
        const row = document.createElement("li");
        row.textContent =
            `k=${entry.k} λ=${entry.lambdaSmooth}` +
            `${entry.smoothBoundaries ? " +smooth" : ""} → ` +
            `${entry.partCount} parts, E=${entry.energy.toFixed(3)} ` +
            `(${entry.elapsedMs.toFixed(0)} ms)`;
        history.appendChild(row);
    }

    if (state.geometry) {
        const colors = faceColors(
            state.displayMode,
            state.labels,
            state.fieldValues,
            state.selection,
            state.faceCount,
        );
        view.setFaceColors(
            previewFaceMap ? gatherPreviewColors(colors, previewFaceMap) : colors,
        );
    }
}

// -- upload -----------------------------------------------------------------

async function handleFile(file: File): Promise<void> {
    const buffer = await file.arrayBuffer();
    await store.uploadMesh(buffer);
    if (store.state.geometry) {
        const preview = decimateForPreview(store.state.geometry.faces);
        previewFaceMap = preview.decimated ? preview.faceMap : null;
        el("banner").style.display = preview.decimated ? "block" : "none";
        view.setGeometry(store.state.geometry.vertices, preview.faces,
                         previewFaceMap);
        render(store.state);
    }
}

const dropzone = el("dropzone");
dropzone.addEventListener("dragover", (e) => {
    e.preventDefault();
    dropzone.classList.add("hover");
});
dropzone.addEventListener("dragleave", () => dropzone.classList.remove("hover"));
dropzone.addEventListener("drop", (e) => {
    e.preventDefault();
    dropzone.classList.remove("hover");
    const file = e.dataTransfer?.files?.[0];
    if (file) void handleFile(file);
});
el<HTMLInputElement>("file-input").addEventListener("change", (e) => {
    const file = (e.target as HTMLInputElement).files?.[0];
    if (file) void handleFile(file);
});

// -- field + parameters -------------------------------------------------------

el("compute-field").addEventListener("click", () => {
    store.setParams({
        source: el<HTMLSelectElement>("source").value as "oracle" | "model",
        rays: Number(el<HTMLInputElement>("rays").value),
    });
    void store.computeField();
});

function autoMode(): boolean {
    return (
        el<HTMLInputElement>("auto").checked &&
        store.state.faceCount > 0 &&
        store.state.faceCount < AUTO_MODE_FACE_LIMIT
    );
}

const kSlider = el<HTMLInputElement>("k");
kSlider.addEventListener("input", () => {
    el("k-label").textContent = kSlider.value;
    store.setParams({ k: Number(kSlider.value) });
    if (autoMode()) void store.commitParams();
});
kSlider.addEventListener("change", () => {
    if (!autoMode()) void store.commitParams();
});

const lambdaSlider = el<HTMLInputElement>("lambda");
lambdaSlider.addEventListener("input", () => {
    const lambda = Math.pow(10, Number(lambdaSlider.value));
    el("lambda-label").textContent = lambda.toFixed(2);
    store.setParams({ lambdaSmooth: lambda });
    if (autoMode()) void store.commitParams();
});
lambdaSlider.addEventListener("change", () => {
    if (!autoMode()) void store.commitParams();
});

el<HTMLInputElement>("smooth").addEventListener("change", (e) => {
    store.setParams({ smoothBoundaries: (e.target as HTMLInputElement).checked });
    void store.commitParams();
});

el("mode-segments").addEventListener("click", () => store.setDisplayMode("segments"));
el("mode-heatmap").addEventListener("click", () => store.setDisplayMode("heatmap"));

// -- picking + refine ---------------------------------------------------------

let downAt: [number, number] | null = null;
const canvas = el<HTMLCanvasElement>("viewport");
canvas.addEventListener("pointerdown", (e) => (downAt = [e.clientX, e.clientY]));
canvas.addEventListener("pointerup", (e) => {
    if (!downAt) return;
    const moved = Math.hypot(e.clientX - downAt[0], e.clientY - downAt[1]);
    downAt = null;
    if (moved > 4) return; // that was a drag, not a click
    store.selectFace(view.pickFace(e.clientX, e.clientY));
});

el("refine").addEventListener("click", () => {
    void store.refineSelected(Number(el<HTMLInputElement>("refine-k").value));
});

render(store.state);
