/** three.js rendering: flat-shaded per-face colors and face picking. */

import * as THREE from "three";

export class MeshView {
    private readonly renderer: THREE.WebGLRenderer;
    private readonly scene = new THREE.Scene();
    private readonly camera: THREE.PerspectiveCamera;
    private readonly raycaster = new THREE.Raycaster();
    private mesh: THREE.Mesh | null = null;
    private faceCount = 0;

    // minimal orbit: yaw/pitch around the origin plus dolly
    private yaw = 0.6;
    private pitch = 0.4;
    private distance = 6;
    private dragging = false;
    private lastX = 0;
    private lastY = 0;

    constructor(private readonly canvas: HTMLCanvasElement) {
        this.renderer = new THREE.WebGLRenderer({ canvas, antialias: true });
        this.camera = new THREE.PerspectiveCamera(45, 1, 0.01, 500);
        this.scene.background = new THREE.Color(0x14161a);
        const key = new THREE.DirectionalLight(0xffffff, 2.2);
        key.position.set(3, 4, 5);
        this.scene.add(key);
        this.scene.add(new THREE.AmbientLight(0xffffff, 0.55));
        this.bindControls();
        this.resize();
        window.addEventListener("resize", () => this.resize());
        this.animate();
    }

    private bindControls(): void {
        this.canvas.addEventListener("pointerdown", (e) => {
            this.dragging = true;
            this.lastX = e.clientX;
            this.lastY = e.clientY;
        });
        window.addEventListener("pointerup", () => (this.dragging = false));
        window.addEventListener("pointermove", (e) => {
            if (!this.dragging) return;
            this.yaw += (e.clientX - this.lastX) * 0.008;
            this.pitch += (e.clientY - this.lastY) * 0.008;
            this.pitch = Math.max(-1.5, Math.min(1.5, this.pitch));
            this.lastX = e.clientX;
            this.lastY = e.clientY;
        });
        this.canvas.addEventListener("wheel", (e) => {
            e.preventDefault();
            this.distance *= Math.exp(e.deltaY * 0.001);
            this.distance = Math.max(0.5, Math.min(100, this.distance));
        }, { passive: false });
    }

    private resize(): void {
        const w = this.canvas.clientWidth || this.canvas.width;
        const h = this.canvas.clientHeight || this.canvas.height;
        this.renderer.setSize(w, h, false);
        this.camera.aspect = w / Math.max(1, h);
        this.camera.updateProjectionMatrix();
    }

    private animate = (): void => {
        requestAnimationFrame(this.animate);
        const cp = Math.cos(this.pitch);
        this.camera.position.set(
            this.distance * cp * Math.sin(this.yaw),
            this.distance * Math.sin(this.pitch),
            this.distance * cp * Math.cos(this.yaw),
        );
        this.camera.lookAt(0, 0, 0);
        this.renderer.render(this.scene, this.camera);
    };

    private faceMap: number[] | null = null;

    /** Replace the displayed mesh. Vertices are duplicated per face so each
     * triangle carries one flat color. ``faceMap`` translates displayed
     * triangles back to original face ids (decimated previews). */
    setGeometry(vertices: number[][], faces: number[][],
                faceMap: number[] | null = null): void {
        if (this.mesh) {
            this.scene.remove(this.mesh);
            this.mesh.geometry.dispose();
            (this.mesh.material as THREE.Material).dispose();
        }
        this.faceMap = faceMap;
        this.faceCount = faces.length;
        const positions = new Float32Array(faces.length * 9);
        let center = [0, 0, 0];
        for (const v of vertices) {
            center = [center[0] + v[0], center[1] + v[1], center[2] + v[2]];
        }
        center = center.map((c) => c / Math.max(1, vertices.length));
        let radius = 0.0;
        for (const v of vertices) {
            const d = Math.hypot(v[0] - center[0], v[1] - center[1], v[2] - center[2]);
            if (d > radius) radius = d;
        }
        for (let f = 0; f < faces.length; f++) {
            for (let c = 0; c < 3; c++) {
                const v = vertices[faces[f][c]];
                positions[9 * f + 3 * c] = v[0] - center[0];
                positions[9 * f + 3 * c + 1] = v[1] - center[1];
                positions[9 * f + 3 * c + 2] = v[2] - center[2];
            }
        }
        const geometry = new THREE.BufferGeometry();
        geometry.setAttribute("position", new THREE.BufferAttribute(positions, 3));
        geometry.computeVertexNormals();
        const material = new THREE.MeshStandardMaterial({
            vertexColors: true,
            flatShading: true,
            roughness: 0.8,
        });
        geometry.setAttribute(
            "color",
            new THREE.BufferAttribute(new Float32Array(positions.length).fill(0.7), 3),
        );
        this.mesh = new THREE.Mesh(geometry, material);
        this.scene.add(this.mesh);
        this.distance = radius * 3.2;
    }

    /** Per-face RGB triples (faceCount * 3 floats) spread to the 9 floats of
     * each duplicated triangle. */
    setFaceColors(perFace: Float32Array): void {
        if (!this.mesh) return;
        const attr = this.mesh.geometry.getAttribute("color") as THREE.BufferAttribute;
        const data = attr.array as Float32Array;
        for (let f = 0; f < this.faceCount; f++) {
            for (let c = 0; c < 3; c++) {
                data[9 * f + 3 * c] = perFace[3 * f];
                data[9 * f + 3 * c + 1] = perFace[3 * f + 1];
                data[9 * f + 3 * c + 2] = perFace[3 * f + 2];
            }
        }
        attr.needsUpdate = true;
    }

    /** Original face index under a pointer event, or null. */
    pickFace(clientX: number, clientY: number): number | null {
        if (!this.mesh) return null;
        const rect = this.canvas.getBoundingClientRect();
        const ndc = new THREE.Vector2(
            ((clientX - rect.left) / rect.width) * 2 - 1,
            -((clientY - rect.top) / rect.height) * 2 + 1,
        );
        this.raycaster.setFromCamera(ndc, this.camera);
        const hits = this.raycaster.intersectObject(this.mesh);
        if (!hits.length || hits[0].faceIndex === undefined) return null;
        const tri = hits[0].faceIndex ?? null;
        if (tri === null) return null;
        return this.faceMap ? this.faceMap[tri] ?? null : tri;
    }
}
