"""Command-line interface: fields, sampling, training, segmentation, search,
data generation and benchmarking.

Artifacts (JSON, PLY, model binaries) are deterministic for fixed inputs and
seed; timing information goes to logs and bench reports only. A key=value
config file can pre-set any flag; explicit flags win. Exit codes: 0 success,
1 usage error, 2 processing error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

_LOGGER = logging.getLogger("meshseg.cli")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _add_common(parser):
    parser.add_argument("--config", default=argparse.SUPPRESS,
                        help="key=value file layered under flags")
    parser.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    parser.add_argument("--threads", type=int, default=argparse.SUPPRESS,
                        help="worker cap (stages here are single-threaded)")
    parser.add_argument("--dry-run", action="store_true",
                        default=argparse.SUPPRESS,
                        help="validate inputs and print the resolved config")
    parser.add_argument("-v", "--verbose", action="store_true",
                        default=argparse.SUPPRESS)


_SHDF_FLAGS = {
    "rays": 30,
    "half_angle_deg": 60.0,
    "outlier_std": 1.0,
    "alpha": 4.0,
    "smooth_iters": 0,
}

_PARTITION_FLAGS = {
    "k": 3,
    "lambda_smooth": 1.0,
    "concavity_bias": 2.0,
    "min_part_faces": 5,
    "max_cycles": 10,
}


def _add_shdf_flags(parser):
    parser.add_argument("--rays", type=int, default=argparse.SUPPRESS)
    parser.add_argument("--half-angle-deg", type=float,
                        default=argparse.SUPPRESS)
    parser.add_argument("--outlier-std", type=float, default=argparse.SUPPRESS)
    parser.add_argument("--alpha", type=float, default=argparse.SUPPRESS)
    parser.add_argument("--smooth-iters", type=int, default=argparse.SUPPRESS)


def _add_partition_flags(parser):
    parser.add_argument("--k", type=int, default=argparse.SUPPRESS)
    parser.add_argument("--lambda-smooth", type=float,
                        default=argparse.SUPPRESS)
    parser.add_argument("--concavity-bias", type=float,
                        default=argparse.SUPPRESS)
    parser.add_argument("--min-part-faces", type=int,
                        default=argparse.SUPPRESS)
    parser.add_argument("--max-cycles", type=int, default=argparse.SUPPRESS)


def build_parser():
    parser = _Parser(prog="meshseg", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("shdf", help="reference diameter field for a mesh")
    p.add_argument("mesh")
    p.add_argument("--out", required=True)
    p.add_argument("--ply", default=argparse.SUPPRESS,
                   help="also write a grayscale-colored PLY")
    p.add_argument("--raw", action="store_true", default=argparse.SUPPRESS,
                   help="skip normalization")
    _add_shdf_flags(p)
    _add_common(p)

    p = sub.add_parser("sample", help="Poisson-disk sample set for a mesh")
    p.add_argument("mesh")
    p.add_argument("--out", required=True)
    p.add_argument("--radius", type=float, default=argparse.SUPPRESS)
    _add_common(p)

    p = sub.add_parser("train", help="train a field-prediction model")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--out", required=True, help="model file")
    p.add_argument("--history", default=argparse.SUPPRESS,
                   help="loss history CSV")
    p.add_argument("--steps", type=int, default=argparse.SUPPRESS)
    p.add_argument("--decay-start", type=int, default=argparse.SUPPRESS)
    p.add_argument("--batch", type=int, default=argparse.SUPPRESS)
    p.add_argument("--rounds", type=int, default=argparse.SUPPRESS)
    p.add_argument("--width", type=int, default=argparse.SUPPRESS)
    p.add_argument("--activation", choices=["tanh", "relu", "elu"],
                   default=argparse.SUPPRESS)
    p.add_argument("--float32", action="store_true", default=argparse.SUPPRESS)
    _add_common(p)

    p = sub.add_parser("infer", help="predicted field via a trained model")
    p.add_argument("mesh")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--radius", type=float, default=argparse.SUPPRESS)
    p.add_argument("--ply", default=argparse.SUPPRESS)
    _add_common(p)

    p = sub.add_parser("segment", help="full segmentation pipeline")
    p.add_argument("mesh")
    p.add_argument("--out", required=True)
    p.add_argument("--ply", default=argparse.SUPPRESS,
                   help="also write a part-colored PLY")
    p.add_argument("--source", choices=["oracle", "model"],
                   default=argparse.SUPPRESS)
    p.add_argument("--model", default=argparse.SUPPRESS)
    p.add_argument("--radius", type=float, default=argparse.SUPPRESS)
    p.add_argument("--smooth", action="store_true", default=argparse.SUPPRESS)
    _add_shdf_flags(p)
    _add_partition_flags(p)
    _add_common(p)

    p = sub.add_parser("refine", help="re-segment one part of a segmentation")
    p.add_argument("mesh")
    p.add_argument("--seg", required=True, help="parent segmentation JSON")
    p.add_argument("--part", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--ply", default=argparse.SUPPRESS)
    p.add_argument("--source", choices=["oracle", "model"],
                   default=argparse.SUPPRESS)
    p.add_argument("--model", default=argparse.SUPPRESS)
    p.add_argument("--radius", type=float, default=argparse.SUPPRESS)
    _add_shdf_flags(p)
    _add_partition_flags(p)
    _add_common(p)

    p = sub.add_parser("grid-search",
                       help="sweep (k, lambda) reusing one field")
    p.add_argument("mesh")
    p.add_argument("--out", required=True)
    p.add_argument("--k-values", default="2,3,4")
    p.add_argument("--lambda-values", default="0.5,1.0,2.0")
    p.add_argument("--metric", choices=["energy", "silhouette"],
                   default=argparse.SUPPRESS)
    p.add_argument("--source", choices=["oracle", "model"],
                   default=argparse.SUPPRESS)
    p.add_argument("--model", default=argparse.SUPPRESS)
    p.add_argument("--radius", type=float, default=argparse.SUPPRESS)
    _add_shdf_flags(p)
    _add_partition_flags(p)
    _add_common(p)

    p = sub.add_parser("gen-data", help="procedural training dataset")
    p.add_argument("mesh", help="base mesh")
    p.add_argument("--out", required=True, help="dataset directory")
    p.add_argument("--count", type=int, default=8)
    p.add_argument("--radius", type=float, default=argparse.SUPPRESS)
    p.add_argument("--tessellate-levels", type=int, default=argparse.SUPPRESS)
    p.add_argument("--remesh-jitter", type=float, default=argparse.SUPPRESS)
    _add_shdf_flags(p)
    _add_common(p)

    p = sub.add_parser("bench", help="oracle vs model field timing")
    p.add_argument("mesh")
    p.add_argument("--model", required=True)
    p.add_argument("--out", default=argparse.SUPPRESS)
    p.add_argument("--radius", type=float, default=argparse.SUPPRESS)
    _add_shdf_flags(p)
    _add_partition_flags(p)
    _add_common(p)

    return parser


def _read_config_file(path):
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, _, value = line.partition("=")
        out[key.strip().replace("-", "_")] = value.strip()
    return out


_COMMON_DEFAULTS = {"seed": 0, "threads": 1, "verbose": False,
                    "dry_run": False, "config": None}

_DEFAULTS = {
    "shdf": {**_SHDF_FLAGS, "ply": None, "raw": False},
    "sample": {"radius": None},
    "train": {"history": None, "steps": 50_000, "decay_start": 30_000,
              "batch": 1, "rounds": 4, "width": 128, "activation": "tanh",
              "float32": False},
    "infer": {"radius": None, "ply": None},
    "segment": {**_SHDF_FLAGS, **_PARTITION_FLAGS, "source": "oracle",
                "model": None, "radius": None, "smooth": False, "ply": None},
    "refine": {**_SHDF_FLAGS, **_PARTITION_FLAGS, "source": "oracle",
               "model": None, "radius": None, "ply": None},
    "grid-search": {**_SHDF_FLAGS, **_PARTITION_FLAGS, "source": "oracle",
                    "model": None, "radius": None, "metric": "energy"},
    "gen-data": {**_SHDF_FLAGS, "radius": None, "tessellate_levels": 0,
                 "remesh_jitter": 0.0},
    "bench": {**_SHDF_FLAGS, **_PARTITION_FLAGS, "out": None, "radius": None},
}


def _resolve(command, namespace):
    """defaults < config file < explicit flags."""
    values = dict(_COMMON_DEFAULTS)
    values.update(_DEFAULTS[command])
    ns = vars(namespace)
    config_path = ns.get("config")
    if config_path:
        raw = _read_config_file(config_path)
        for key, text in raw.items():
            if key not in values:
                raise UsageError(f"config key {key!r} unknown for {command}")
            current = values[key]
            if isinstance(current, bool):
                values[key] = text.lower() in ("1", "true", "yes", "on")
            elif isinstance(current, int) and not isinstance(current, bool):
                values[key] = int(text)
            elif isinstance(current, float):
                values[key] = float(text)
            else:
                values[key] = text
    for key, val in ns.items():
        if key not in ("command", "config"):
            values[key] = val
    return values


def _load_mesh_file(path):
    from .mesh import load_mesh

    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"mesh file not found: {path}")
    return load_mesh(p.read_bytes(), fmt=p.suffix.lstrip(".").lower() or None)


def _shdf_params(values):
    from .shdf import ShdfParams

    return ShdfParams(
        cone_half_angle=np.deg2rad(values["half_angle_deg"]),
        rays_per_point=values["rays"],
        outlier_std_factor=values["outlier_std"],
        normalization_alpha=values["alpha"],
        smoothing_iterations=values["smooth_iters"],
        seed=values["seed"],
    )


def _partition_params(values):
    from .partition import PartitionParams

    return PartitionParams(
        k=values["k"],
        lambda_smooth=values["lambda_smooth"],
        concavity_bias=values["concavity_bias"],
        max_expansion_cycles=values["max_cycles"],
        min_part_faces=values["min_part_faces"],
        seed=values["seed"],
    )


def _pipeline_config(values):
    from .pipeline import PipelineConfig

    return PipelineConfig(
        shdf_source=values.get("source", "oracle"),
        model_path=values.get("model"),
        shdf=_shdf_params(values),
        sampling_radius=values.get("radius"),
        partition=_partition_params(values),
        smooth=values.get("smooth", False),
    )


def _write_json(path, text):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(text if text.endswith("\n") else text + "\n")


def _field_to_gray_ply(mesh, fld):
    from .mesh import save_ply

    v = fld.values
    lo, hi = float(v.min()), float(v.max())
    u = (v - lo) / (hi - lo) if hi > lo else np.zeros_like(v)
    gray = np.clip(u * 255, 0, 255).astype(np.uint8)
    return save_ply(mesh, binary=True,
                    face_colors=np.column_stack([gray, gray, gray]))


def _announce(payload):
    print(json.dumps(payload, sort_keys=True))


# -- command implementations -------------------------------------------------


def _cmd_shdf(values):
    from .shdf import build_accel, compute_shdf_field, normalize_log

    mesh = _load_mesh_file(values["mesh"])
    params = _shdf_params(values)
    fld = compute_shdf_field(mesh, build_accel(mesh), params)
    if not values["raw"]:
        fld = normalize_log(fld, params.normalization_alpha)
        if params.smoothing_iterations > 0:
            from .mesh import build_adjacency
            from .shdf import smooth_anisotropic
            fld = smooth_anisotropic(fld, mesh, build_adjacency(mesh),
                                     params.smoothing_iterations)
    _write_json(values["out"], fld.to_json())
    if values.get("ply"):
        Path(values["ply"]).write_bytes(_field_to_gray_ply(mesh, fld))
    _announce({"command": "shdf", "faces": mesh.n_faces, "out": values["out"]})


def _cmd_sample(values):
    from .sampling import sample_mesh

    mesh = _load_mesh_file(values["mesh"])
    samples = sample_mesh(mesh, values["radius"], seed=values["seed"])
    _write_json(values["out"], samples.to_json())
    _announce({"command": "sample", "samples": samples.n_samples,
               "out": values["out"]})


def _cmd_train(values):
    from .datagen import load_dataset
    from .network import TrainSchedule, new_model, save_model, train

    dataset = load_dataset(values["data"])
    if not dataset:
        raise ValueError(f"dataset at {values['data']} is empty")
    schedule = TrainSchedule(
        total_steps=values["steps"],
        decay_start_step=values["decay_start"],
        batch_size=values["batch"],
        seed=values["seed"],
    )
    model = new_model(rounds=values["rounds"], width=values["width"],
                      activation=values["activation"], seed=values["seed"])
    dtype = np.float32 if values["float32"] else np.float64
    trained, history = train(model, dataset, schedule, dtype=dtype)
    Path(values["out"]).parent.mkdir(parents=True, exist_ok=True)
    Path(values["out"]).write_bytes(save_model(trained))
    if values.get("history"):
        lines = ["step,lr,loss"]
        lines += [f"{s},{lr:.9g},{loss:.9g}" for s, lr, loss in history]
        _write_json(values["history"], "\n".join(lines))
    _announce({"command": "train", "steps": values["steps"],
               "final_loss": history[-1][2], "out": values["out"]})


def _cmd_infer(values):
    from .network import infer_field, load_model

    mesh = _load_mesh_file(values["mesh"])
    model = load_model(Path(values["model"]).read_bytes())
    fld = infer_field(model, mesh, values["radius"], seed=values["seed"])
    _write_json(values["out"], fld.to_json())
    if values.get("ply"):
        Path(values["ply"]).write_bytes(_field_to_gray_ply(mesh, fld))
    _announce({"command": "infer", "faces": mesh.n_faces, "out": values["out"]})


def _cmd_segment(values):
    from .partition import export_colored_ply
    from .pipeline import Pipeline

    mesh = _load_mesh_file(values["mesh"])
    config = _pipeline_config(values)
    pipe = Pipeline()
    seg = pipe.segment(mesh, config)
    _write_json(values["out"], seg.to_json())
    if values.get("ply"):
        Path(values["ply"]).write_bytes(export_colored_ply(mesh, seg))
    _LOGGER.info("timings: %s", pipe.last_manifest["timings"])
    _announce({"command": "segment", "part_count": seg.part_count,
               "energy": seg.energy, "out": values["out"]})


def _cmd_refine(values):
    from .partition import Segmentation, export_colored_ply
    from .pipeline import Pipeline

    mesh = _load_mesh_file(values["mesh"])
    seg = Segmentation.from_json(Path(values["seg"]).read_text())
    if len(seg.labels) != mesh.n_faces:
        raise ValueError(
            f"segmentation covers {len(seg.labels)} faces, mesh has "
            f"{mesh.n_faces}"
        )
    config = _pipeline_config(values)
    pipe = Pipeline()
    seg.mesh_id = pipe.cache.register(mesh)
    refined = pipe.refine_part(seg, values["part"], config)
    _write_json(values["out"], refined.to_json())
    if values.get("ply"):
        Path(values["ply"]).write_bytes(export_colored_ply(mesh, refined))
    _announce({"command": "refine", "part_count": refined.part_count,
               "out": values["out"]})


def _cmd_grid_search(values):
    from .pipeline import Pipeline

    mesh = _load_mesh_file(values["mesh"])
    config = _pipeline_config(values)
    try:
        k_values = [int(x) for x in str(values["k_values"]).split(",") if x]
        lambda_values = [float(x) for x in
                         str(values["lambda_values"]).split(",") if x]
    except ValueError as exc:
        raise UsageError(f"bad grid values: {exc}")
    pipe = Pipeline()
    results = pipe.grid_search(mesh, config, k_values, lambda_values,
                               metric=values["metric"])
    report = {
        "metric": values["metric"],
        "results": [
            {k: v for k, v in r.items() if k not in ("segmentation",
                                                     "partition_ms")}
            for r in results
        ],
    }
    _write_json(values["out"], json.dumps(report, sort_keys=True, indent=2))
    best = results[0]
    _announce({"command": "grid-search", "best_k": best["k"],
               "best_lambda": best["lambda_smooth"], "out": values["out"]})


def _cmd_gen_data(values):
    from .datagen import (DeformSpec, build_training_pairs, generate_variants,
                          remesh_perturb, save_dataset, tessellate)

    base = _load_mesh_file(values["mesh"])
    spec = DeformSpec(seed=values["seed"])
    meshes = generate_variants(base, spec, values["count"], seed=values["seed"])
    if values["tessellate_levels"] > 0:
        meshes += [tessellate(m, values["tessellate_levels"])
                   for m in meshes[: max(1, len(meshes) // 2)]]
    if values["remesh_jitter"] > 0:
        meshes += [remesh_perturb(m, jitter=values["remesh_jitter"],
                                  seed=values["seed"] + i)
                   for i, m in enumerate(meshes[: max(1, len(meshes) // 2)])]
    params = _shdf_params(values)
    pairs = build_training_pairs(meshes, radius=values["radius"],
                                 params=params, seed=values["seed"])
    save_dataset(pairs, values["out"], manifest_extra={
        "seed": values["seed"], "base_mesh": str(values["mesh"]),
        "count": values["count"],
    })
    _announce({"command": "gen-data", "pairs": len(pairs),
               "out": values["out"]})


def _cmd_bench(values):
    from .pipeline import Pipeline

    mesh = _load_mesh_file(values["mesh"])
    oracle_cfg = _pipeline_config(dict(values, source="oracle", model=None))
    model_cfg = _pipeline_config(dict(values, source="model"))

    rows = []
    for name, cfg in (("oracle", oracle_cfg), ("model", model_cfg)):
        pipe = Pipeline()
        pipe.segment(mesh, cfg)
        timings = pipe.last_manifest["timings"]
        rows.append({
            "source": name,
            "shdf_ms": timings["shdf_ms"],
            "partition_ms": timings["partition_ms"],
            "total_ms": timings["total_ms"],
        })
    speedup = rows[0]["shdf_ms"] / max(rows[1]["shdf_ms"], 1e-9)
    report = {
        "deterministic": {
            "faces": mesh.n_faces,
            "vertices": mesh.n_vertices,
            "rays": values["rays"],
            "k": values["k"],
        },
        "rows": rows,
        "shdf_speedup": speedup,
    }
    if values.get("out"):
        _write_json(values["out"], json.dumps(report, sort_keys=True, indent=2))
    print(json.dumps(report, sort_keys=True, indent=2))


_COMMANDS = {
    "shdf": _cmd_shdf,
    "sample": _cmd_sample,
    "train": _cmd_train,
    "infer": _cmd_infer,
    "segment": _cmd_segment,
    "refine": _cmd_refine,
    "grid-search": _cmd_grid_search,
    "gen-data": _cmd_gen_data,
    "bench": _cmd_bench,
}


def run(argv=None) -> int:
    """Parse argv and execute; returns the process exit code."""
    parser = build_parser()
    try:
        namespace = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help paths exit 0
        return int(exc.code or 0)
    if not getattr(namespace, "command", None):
        parser.print_usage(sys.stderr)
        return 1

    try:
        values = _resolve(namespace.command, namespace)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1

    level = os.environ.get("SEG_LOG", "WARNING").upper()
    if values.get("verbose"):
        level = "INFO"
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        stream=sys.stderr)

    if values.get("dry_run"):
        for key in ("mesh", "seg", "model", "data"):
            path = values.get(key)
            if key == "model" and values.get("source", "oracle") != "model":
                continue
            if path and not Path(str(path)).exists():
                print(f"error: {key} path not found: {path}", file=sys.stderr)
                return 2
        resolved = {k: v for k, v in sorted(values.items())
                    if k not in ("dry_run",)}
        print(json.dumps(resolved, sort_keys=True, default=str))
        return 0

    try:
        _COMMANDS[namespace.command](values)
        return 0
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        _LOGGER.debug("failure", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
