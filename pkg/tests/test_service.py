import numpy as np
import pytest
from fastapi.testclient import TestClient

from meshseg import primitives
from meshseg.mesh import save_obj, save_ply
from meshseg.service import create_app


@pytest.fixture()
def client(tmp_path):
    app = create_app(upload_limit=2 * 1024 * 1024)
    return TestClient(app)


@pytest.fixture(scope="module")
def dumbbell_bytes():
    mesh = primitives.dumbbell(segments=24, arc_steps=12, neck_steps=4)
    return save_obj(mesh).encode()


def upload(client, body):
    return client.post("/meshes", content=body)


def compute_field(client, mesh_id, rays=8, seed=0):
    return client.post(f"/meshes/{mesh_id}/shdf",
                       json={"source": "oracle", "rays": rays, "seed": seed})


class TestUpload:
    def test_upload_reports_counts_and_manifold(self, client, dumbbell_bytes):
        r = upload(client, dumbbell_bytes)
        assert r.status_code == 200
        doc = r.json()
        assert doc["faces"] == 1200
        assert doc["manifold"]["is_closed"] is True
        assert doc["manifold"]["euler_characteristic"] == 2

    def test_upload_ply(self, client):
        r = upload(client, save_ply(primitives.cube()))
        assert r.status_code == 200
        assert r.json()["faces"] == 12

    def test_garbage_is_unprocessable(self, client):
        r = upload(client, b"not a mesh at all")
        assert r.status_code == 422
        assert "error" in r.json()

    def test_oversized_upload_rejected(self, dumbbell_bytes):
        app = create_app(upload_limit=128)
        r = TestClient(app).post("/meshes", content=dumbbell_bytes)
        assert r.status_code == 413

    def test_geometry_round_trip(self, client, dumbbell_bytes):
        mesh_id = upload(client, dumbbell_bytes).json()["id"]
        r = client.get(f"/meshes/{mesh_id}/geometry")
        assert r.status_code == 200
        doc = r.json()
        assert len(doc["vertices"]) == 602
        assert len(doc["faces"]) == 1200


class TestFieldAndSegment:
    def test_field_then_segment(self, client, dumbbell_bytes):
        mesh_id = upload(client, dumbbell_bytes).json()["id"]
        f = compute_field(client, mesh_id)
        assert f.status_code == 200
        field_id = f.json()["field_id"]
        assert f.json()["stats"]["shdf_computations"] == 1

        s = client.post(f"/meshes/{mesh_id}/segment",
                        json={"field_id": field_id, "k": 3, "seed": 0})
        assert s.status_code == 200
        doc = s.json()
        assert len(doc["labels"]) == 1200
        assert set(doc["labels"]) == set(range(doc["part_count"]))

    def test_repartition_reuses_field(self, client, dumbbell_bytes):
        mesh_id = upload(client, dumbbell_bytes).json()["id"]
        field_id = compute_field(client, mesh_id).json()["field_id"]
        first = client.post(f"/meshes/{mesh_id}/segment",
                            json={"field_id": field_id, "k": 2}).json()
        second = client.post(f"/meshes/{mesh_id}/segment",
                             json={"field_id": field_id, "k": 4}).json()
        assert first["stats"]["shdf_computations"] == 1
        assert second["stats"]["shdf_computations"] == 1  # still one

    def test_identical_requests_identical_labels(self, client, dumbbell_bytes):
        mesh_id = upload(client, dumbbell_bytes).json()["id"]
        field_id = compute_field(client, mesh_id).json()["field_id"]
        payload = {"field_id": field_id, "k": 2, "seed": 5}
        a = client.post(f"/meshes/{mesh_id}/segment", json=payload).json()
        b = client.post(f"/meshes/{mesh_id}/segment", json=payload).json()
        assert a["labels"] == b["labels"]
        assert a["energy"] == b["energy"]

    def test_get_field_values(self, client, dumbbell_bytes):
        mesh_id = upload(client, dumbbell_bytes).json()["id"]
        field_id = compute_field(client, mesh_id).json()["field_id"]
        r = client.get(f"/meshes/{mesh_id}/fields/{field_id}")
        assert r.status_code == 200
        values = r.json()["values"]
        assert len(values) == 1200
        assert 0.0 <= min(values) and max(values) <= 1.0

    def test_unknown_field_404(self, client, dumbbell_bytes):
        mesh_id = upload(client, dumbbell_bytes).json()["id"]
        r = client.post(f"/meshes/{mesh_id}/segment",
                        json={"field_id": "deadbeef", "k": 2})
        assert r.status_code == 404

    def test_invalid_params_are_field_level(self, client, dumbbell_bytes):
        mesh_id = upload(client, dumbbell_bytes).json()["id"]
        r = client.post(f"/meshes/{mesh_id}/shdf",
                        json={"rays": 0})
        assert r.status_code == 422
        detail = r.json()["detail"]
        assert any("rays" in str(item.get("loc")) for item in detail)


class TestRefine:
    def test_refine_increases_parts(self, client, dumbbell_bytes):
        mesh_id = upload(client, dumbbell_bytes).json()["id"]
        field_id = compute_field(client, mesh_id).json()["field_id"]
        seg = client.post(f"/meshes/{mesh_id}/segment",
                          json={"field_id": field_id, "k": 2}).json()
        r = client.post(
            f"/meshes/{mesh_id}/segments/{seg['seg_id']}/refine",
            json={"part": 0, "k": 2, "min_part_faces": 5})
        assert r.status_code == 200
        doc = r.json()
        assert doc["part_count"] >= seg["part_count"]
        assert doc["parent_part"] == 0
        # labels outside part 0 unchanged
        before = np.array(seg["labels"])
        after = np.array(doc["labels"])
        outside = before != 0
        assert np.array_equal(after[outside], before[outside])

    def test_refine_out_of_range_part(self, client, dumbbell_bytes):
        mesh_id = upload(client, dumbbell_bytes).json()["id"]
        field_id = compute_field(client, mesh_id).json()["field_id"]
        seg = client.post(f"/meshes/{mesh_id}/segment",
                          json={"field_id": field_id, "k": 2}).json()
        r = client.post(
            f"/meshes/{mesh_id}/segments/{seg['seg_id']}/refine",
            json={"part": 99, "k": 2})
        assert r.status_code == 422


class TestLifecycle:
    def test_unknown_mesh_404_with_error_body(self, client):
        r = client.get("/meshes/nonexistent/geometry")
        assert r.status_code == 404
        assert r.json() == {"error": "unknown mesh"}

    def test_delete_then_gone(self, client, dumbbell_bytes):
        mesh_id = upload(client, dumbbell_bytes).json()["id"]
        assert client.delete(f"/meshes/{mesh_id}").status_code == 200
        assert client.get(f"/meshes/{mesh_id}/geometry").status_code == 404
        assert client.delete(f"/meshes/{mesh_id}").status_code == 404

    def test_healthz(self, client):
        r = client.get("/healthz")
        assert r.status_code == 200
        assert r.json()["status"] == "ok"

    def test_persistence_restores_meshes(self, tmp_path, dumbbell_bytes):
        persist = tmp_path / "store"
        app = create_app(persist_dir=str(persist))
        with TestClient(app) as c:
            mesh_id = c.post("/meshes", content=dumbbell_bytes).json()["id"]

        app2 = create_app(persist_dir=str(persist))
        with TestClient(app2) as c2:
            r = c2.get(f"/meshes/{mesh_id}/geometry")
            assert r.status_code == 200
            assert len(r.json()["faces"]) == 1200
