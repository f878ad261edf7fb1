"""HTTP facade over the segmentation pipeline.

Upload a mesh once, compute a field once, then re-partition and refine
cheaply: fields and segmentations are cached per mesh resource and each
response carries the ids needed for the next call. Per-mesh operations
serialize through a resource lock; reads of finished artifacts are free.
"""

from __future__ import annotations

import json
import logging
import threading
import time
import uuid
from dataclasses import dataclass, field as dc_field, replace
from pathlib import Path
from typing import Literal, Optional

import numpy as np
from fastapi import FastAPI, Request, Response
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .mesh import MeshError, ParseError, build_adjacency, load_mesh, validate_manifold
from .partition import PartitionParams, Segmentation
from .pipeline import Pipeline, PipelineConfig, PipelineError, RefinementDeclined
from .shdf import ShdfParams

_LOGGER = logging.getLogger(__name__)

DEFAULT_UPLOAD_LIMIT = 64 * 1024 * 1024


class ShdfRequest(BaseModel):
    source: Literal["oracle", "model"] = "oracle"
    model_path: Optional[str] = None
    rays: int = Field(default=30, ge=1, le=4096)
    half_angle_deg: float = Field(default=60.0, gt=0.0, lt=90.0)
    outlier_std: float = Field(default=1.0, ge=0.0)
    alpha: float = Field(default=4.0, gt=0.0)
    smooth_iters: int = Field(default=0, ge=0)
    sampling_radius: Optional[float] = Field(default=None, gt=0.0)
    seed: int = 0


class SegmentRequest(BaseModel):
    field_id: str
    k: int = Field(default=3, ge=1, le=64)
    lambda_smooth: float = Field(default=1.0, ge=0.0)
    concavity_bias: float = Field(default=2.0, ge=0.0)
    min_part_faces: int = Field(default=5, ge=1)
    smooth_boundaries: bool = False
    seed: int = 0


class RefineRequest(BaseModel):
    part: int = Field(ge=0)
    k: int = Field(default=2, ge=1, le=64)
    lambda_smooth: float = Field(default=1.0, ge=0.0)
    min_part_faces: int = Field(default=5, ge=1)
    seed: int = 0


@dataclass
class MeshResource:
    token: str
    mesh_id: str                      # session-cache key
    created_at: float
    lock: threading.Lock = dc_field(default_factory=threading.Lock)
    field_configs: dict = dc_field(default_factory=dict)   # field_id -> config
    segmentations: dict = dc_field(default_factory=dict)   # seg_id -> (seg, config)


def _error(status, message):
    return JSONResponse(status_code=status, content={"error": message})


def create_app(upload_limit: int = DEFAULT_UPLOAD_LIMIT,
               persist_dir: str = None) -> FastAPI:
    app = FastAPI(title="meshseg service")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    pipeline = Pipeline()
    resources: dict[str, MeshResource] = {}
    persist = Path(persist_dir) if persist_dir else None
    if persist:
        persist.mkdir(parents=True, exist_ok=True)
        _restore(persist, pipeline, resources)

    app.state.pipeline = pipeline
    app.state.resources = resources

    def resource_or_none(token):
        return resources.get(token)

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "meshes": len(resources)}

    @app.post("/meshes")
    async def upload(request: Request):
        body = await request.body()
        if len(body) > upload_limit:
            return _error(413, f"upload exceeds {upload_limit} bytes")
        if not body:
            return _error(422, "empty mesh body")
        try:
            mesh = load_mesh(bytes(body))
        except (ParseError, MeshError) as exc:
            return _error(422, f"unparseable mesh: {exc}")
        token = uuid.uuid4().hex[:12]
        mesh_id = pipeline.cache.register(mesh)
        resources[token] = MeshResource(token, mesh_id, time.time())
        if persist:
            (persist / f"{token}.mesh").write_bytes(bytes(body))
        report = validate_manifold(mesh, pipeline.cache.adjacency(mesh_id))
        return {
            "id": token,
            "vertices": mesh.n_vertices,
            "faces": mesh.n_faces,
            "manifold": {
                "is_closed": report.is_closed,
                "boundary_edges": report.boundary_edge_count,
                "non_manifold_edges": report.non_manifold_edge_count,
                "euler_characteristic": report.euler_characteristic,
            },
        }

    @app.post("/meshes/{token}/shdf")
    def compute_field(token: str, req: ShdfRequest):
        res = resource_or_none(token)
        if res is None:
            return _error(404, "unknown mesh")
        if req.source == "model":
            if not req.model_path or not Path(req.model_path).exists():
                return _error(422, "model source requires an existing model_path")
        config = PipelineConfig(
            shdf_source=req.source,
            model_path=req.model_path,
            shdf=ShdfParams(
                cone_half_angle=np.deg2rad(req.half_angle_deg),
                rays_per_point=req.rays,
                outlier_std_factor=req.outlier_std,
                normalization_alpha=req.alpha,
                smoothing_iterations=req.smooth_iters,
                seed=req.seed,
            ),
            sampling_radius=req.sampling_radius,
        )
        from .pipeline import field_cache_key

        with res.lock:
            t0 = time.perf_counter()
            try:
                fld = pipeline.compute_field(res.mesh_id, config)
            except PipelineError as exc:
                return _error(422, str(exc))
            elapsed = (time.perf_counter() - t0) * 1000.0
            field_id = field_cache_key(config)
            res.field_configs[field_id] = config
        entry = pipeline.cache.entry(res.mesh_id)
        return {
            "field_id": field_id,
            "stats": {
                "faces": len(fld.values),
                "min": float(fld.values.min()),
                "max": float(fld.values.max()),
                "mean": float(fld.values.mean()),
                "shdf_computations": entry.stats["shdf_computations"],
            },
            "elapsed_ms": elapsed,
        }

    @app.post("/meshes/{token}/segment")
    def segment(token: str, req: SegmentRequest):
        res = resource_or_none(token)
        if res is None:
            return _error(404, "unknown mesh")
        base = res.field_configs.get(req.field_id)
        if base is None:
            return _error(404, "unknown field")
        config = replace(
            base,
            partition=PartitionParams(
                k=req.k,
                lambda_smooth=req.lambda_smooth,
                concavity_bias=req.concavity_bias,
                min_part_faces=req.min_part_faces,
                seed=req.seed,
            ),
            smooth=req.smooth_boundaries,
        )
        mesh = pipeline.cache.entry(res.mesh_id).mesh
        with res.lock:
            t0 = time.perf_counter()
            try:
                seg = pipeline.segment(mesh, config, mesh_id=res.mesh_id)
            except PipelineError as exc:
                return _error(422, str(exc))
            elapsed = (time.perf_counter() - t0) * 1000.0
            seg_id = uuid.uuid4().hex[:12]
            res.segmentations[seg_id] = (seg, config)
            if persist:
                (persist / f"{token}.{seg_id}.seg.json").write_text(seg.to_json())
        entry = pipeline.cache.entry(res.mesh_id)
        return {
            "seg_id": seg_id,
            "labels": seg.labels.tolist(),
            "part_count": seg.part_count,
            "energy": seg.energy,
            "elapsed_ms": elapsed,
            "stats": {"shdf_computations": entry.stats["shdf_computations"]},
        }

    @app.post("/meshes/{token}/segments/{seg_id}/refine")
    def refine(token: str, seg_id: str, req: RefineRequest):
        res = resource_or_none(token)
        if res is None:
            return _error(404, "unknown mesh")
        held = res.segmentations.get(seg_id)
        if held is None:
            return _error(404, "unknown segmentation")
        seg, base = held
        if req.part >= seg.part_count:
            return _error(422, f"part {req.part} out of range "
                               f"[0, {seg.part_count})")
        config = replace(
            base,
            partition=PartitionParams(
                k=req.k,
                lambda_smooth=req.lambda_smooth,
                min_part_faces=req.min_part_faces,
                seed=req.seed,
            ),
        )
        with res.lock:
            t0 = time.perf_counter()
            try:
                refined = pipeline.refine_part(seg, req.part, config)
            except RefinementDeclined as exc:
                return _error(422, str(exc))
            except PipelineError as exc:
                return _error(422, str(exc))
            elapsed = (time.perf_counter() - t0) * 1000.0
            new_id = uuid.uuid4().hex[:12]
            res.segmentations[new_id] = (refined, config)
        return {
            "seg_id": new_id,
            "labels": refined.labels.tolist(),
            "part_count": refined.part_count,
            "energy": refined.energy,
            "parent_seg_id": seg_id,
            "parent_part": refined.parent_part,
            "elapsed_ms": elapsed,
        }

    @app.get("/meshes/{token}/geometry")
    def geometry(token: str):
        res = resource_or_none(token)
        if res is None:
            return _error(404, "unknown mesh")
        mesh = pipeline.cache.entry(res.mesh_id).mesh
        return {
            "vertices": mesh.vertices.tolist(),
            "faces": mesh.faces.tolist(),
        }

    @app.get("/meshes/{token}/fields/{field_id}")
    def get_field(token: str, field_id: str):
        res = resource_or_none(token)
        if res is None:
            return _error(404, "unknown mesh")
        config = res.field_configs.get(field_id)
        if config is None:
            return _error(404, "unknown field")
        fld = pipeline.compute_field(res.mesh_id, config)  # cached
        return {
            "field_id": field_id,
            "domain": fld.domain,
            "provenance": fld.provenance,
            "normalized": fld.normalized,
            "values": fld.values.tolist(),
        }

    @app.delete("/meshes/{token}")
    def delete(token: str):
        res = resources.pop(token, None)
        if res is None:
            return _error(404, "unknown mesh")
        pipeline.cache.drop(res.mesh_id)
        if persist:
            for stale in persist.glob(f"{token}*"):
                stale.unlink()
        return {"deleted": token}

    return app


def _restore(persist: Path, pipeline: Pipeline, resources: dict):
    for mesh_file in sorted(persist.glob("*.mesh")):
        token = mesh_file.stem
        try:
            mesh = load_mesh(mesh_file.read_bytes())
        except (ParseError, MeshError) as exc:
            _LOGGER.warning("skipping persisted mesh %s: %s", token, exc)
            continue
        mesh_id = pipeline.cache.register(mesh)
        resources[token] = MeshResource(token, mesh_id,
                                        mesh_file.stat().st_mtime)
    if resources:
        _LOGGER.info("restored %d persisted mesh(es)", len(resources))


def main(argv=None):
    """uvicorn launcher: meshseg-serve [--port N] [--persist DIR]."""
    import argparse

    import uvicorn

    parser = argparse.ArgumentParser(prog="meshseg-serve")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8008)
    parser.add_argument("--persist", default=None)
    parser.add_argument("--upload-limit", type=int,
                        default=DEFAULT_UPLOAD_LIMIT)
    args = parser.parse_args(argv)
    app = create_app(upload_limit=args.upload_limit, persist_dir=args.persist)
    uvicorn.run(app, host=args.host, port=args.port)


if __name__ == "__main__":
    main()
