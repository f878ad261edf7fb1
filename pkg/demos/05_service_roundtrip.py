#!/usr/bin/env python3
"""The interactive loop against the HTTP service, in-process.

Upload once, compute the field once, then re-partition and refine cheaply --
the calls a viewer makes when sliders move. Uses the test client; to run a
real server: ``meshseg-serve --port 8008``.
"""

from fastapi.testclient import TestClient

from meshseg import primitives
from meshseg.mesh import save_obj
from meshseg.service import create_app

client = TestClient(create_app())

body = save_obj(primitives.dumbbell()).encode()
mesh = client.post("/meshes", content=body).json()
print(f"uploaded: id={mesh['id']} faces={mesh['faces']} "
      f"closed={mesh['manifold']['is_closed']}")

field = client.post(f"/meshes/{mesh['id']}/shdf",
                    json={"source": "oracle", "rays": 24,
                          "smooth_iters": 2}).json()
print(f"field {field['field_id']} in {field['elapsed_ms']:.0f} ms "
      f"(computations so far: {field['stats']['shdf_computations']})")

for k in (2, 3, 4):
    seg = client.post(f"/meshes/{mesh['id']}/segment",
                      json={"field_id": field["field_id"], "k": k}).json()
    print(f"k={k}: {seg['part_count']} parts in {seg['elapsed_ms']:.0f} ms, "
          f"field computations still {seg['stats']['shdf_computations']}")

seg = client.post(f"/meshes/{mesh['id']}/segment",
                  json={"field_id": field["field_id"], "k": 2}).json()
refined = client.post(
    f"/meshes/{mesh['id']}/segments/{seg['seg_id']}/refine",
    json={"part": 1, "k": 2, "min_part_faces": 40}).json()
print(f"refine of part 1 returned seg {refined['seg_id']} with "
      f"{refined['part_count']} parts (parent had {seg['part_count']}; a "
      f"structureless part legitimately refuses to split further)")

client.delete(f"/meshes/{mesh['id']}")
print("deleted the resource; the viewer in frontend/ drives exactly this API.")
