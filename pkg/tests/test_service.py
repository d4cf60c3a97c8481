import base64
import hashlib
import io

import pytest
import torch
from fastapi.testclient import TestClient
from PIL import Image

from domainflow.service import ModelRegistry, create_app
from domainflow.training import TrainConfig, checkpoint, create_train_state


def make_checkpoint(tmp_path, name, **cfg_overrides):
    cfg = dict(
        total_iterations=10,
        image_size=32,
        crop_size=32,
        seed=4,
        gen_filters=4,
        disc_filters=4,
        num_residual_blocks=1,
        gen_downsamplings=1,
        disc_downsamplings=2,
        image_channels=3,
    )
    cfg.update(cfg_overrides)
    state = create_train_state(TrainConfig(**cfg))
    return checkpoint(state, tmp_path / f"{name}.pt")


def png_b64(size=(32, 32), color=(200, 30, 30)):
    img = Image.new("RGB", size, color)
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


@pytest.fixture(scope="module")
def ckpt_paths(tmp_path_factory):
    d = tmp_path_factory.mktemp("ckpts")
    scalar = make_checkpoint(d, "scalar")
    multi = make_checkpoint(
        d, "styles", num_targets=4, target_names=("monet", "vangogh", "ukiyoe", "cezanne")
    )
    return scalar, multi


@pytest.fixture(scope="module")
def client(ckpt_paths):
    registry = ModelRegistry()
    for p in ckpt_paths:
        registry.register(p)
    return TestClient(create_app(registry))


class TestHealthAndInfo:
    def test_health(self, client):
        r = client.get("/health")
        assert r.status_code == 200
        assert r.json() == {"status": "ok"}

    def test_info_lists_models(self, client):
        r = client.get("/info")
        assert r.status_code == 200
        models = {m["id"]: m for m in r.json()["models"]}
        assert set(models) == {"scalar", "styles"}
        styles = models["styles"]
        assert styles["num_targets"] == 4
        assert styles["domains"][1:] == ["monet", "vangogh", "ukiyoe", "cezanne"]

    def test_info_hash_matches_file(self, client, ckpt_paths):
        r = client.get("/info").json()
        by_id = {m["id"]: m for m in r["models"]}
        assert by_id["scalar"]["checkpoint_sha256"] == hashlib.sha256(
            ckpt_paths[0].read_bytes()
        ).hexdigest()

    def test_empty_registry_is_not_error(self):
        empty = TestClient(create_app(ModelRegistry()))
        r = empty.get("/info")
        assert r.status_code == 200
        assert r.json() == {"models": []}


class TestTranslate:
    def test_valid_request(self, client):
        r = client.post("/translate", json={"model": "scalar", "image": png_b64(), "z": 0.5})
        assert r.status_code == 200
        body = r.json()
        assert body["z"] == 0.5
        assert "latency_ms" in body
        img = Image.open(io.BytesIO(base64.b64decode(body["image"])))
        assert img.size == (32, 32)

    def test_deterministic_byte_identical(self, client):
        req = {"model": "scalar", "image": png_b64(), "z": 0.33}
        a = client.post("/translate", json=req).json()["image"]
        b = client.post("/translate", json=req).json()["image"]
        assert a == b

    def test_unknown_model_404(self, client):
        r = client.post("/translate", json={"model": "nope", "image": png_b64(), "z": 0.5})
        assert r.status_code == 404

    def test_invalid_scalar_z_422(self, client):
        r = client.post("/translate", json={"model": "scalar", "image": png_b64(), "z": 1.5})
        assert r.status_code == 422
        assert "[0, 1]" in r.json()["detail"]

    def test_invalid_vector_z_422(self, client):
        r = client.post(
            "/translate",
            json={"model": "styles", "image": png_b64(), "z": [0.5, 0.5, 0.5, -0.5]},
        )
        assert r.status_code == 422
        assert "outside [0, 1]" in r.json()["detail"]

    def test_bad_sum_vector_422(self, client):
        r = client.post(
            "/translate",
            json={"model": "styles", "image": png_b64(), "z": [0.5, 0.5, 0.5, 0.5]},
        )
        assert r.status_code == 422
        assert "sum" in r.json()["detail"]

    def test_scalar_z_on_vector_model_422(self, client):
        r = client.post("/translate", json={"model": "styles", "image": png_b64(), "z": 0.5})
        assert r.status_code == 422

    def test_undecodable_image_400(self, client):
        bogus = base64.b64encode(b"not a png at all").decode("ascii")
        r = client.post("/translate", json={"model": "scalar", "image": bogus, "z": 0.5})
        assert r.status_code == 400

    def test_oversize_payload_413(self, client):
        big = base64.b64encode(b"\x00" * (8 * 1024 * 1024 + 1)).decode("ascii")
        r = client.post("/translate", json={"model": "scalar", "image": big, "z": 0.5})
        assert r.status_code == 413

    def test_vector_model_translates(self, client):
        r = client.post(
            "/translate",
            json={"model": "styles", "image": png_b64(), "z": [0.25, 0.25, 0.25, 0.25]},
        )
        assert r.status_code == 200
        assert r.json()["z"] == [0.25, 0.25, 0.25, 0.25]

    def test_resize_and_pad_recorded(self, client):
        r = client.post(
            "/translate", json={"model": "scalar", "image": png_b64(size=(64, 32)), "z": 0.5}
        )
        assert r.status_code == 200
        body = r.json()
        assert body["original_size"] == [64, 32]
        left, top, right, bottom = body["content_box"]
        assert (right - left, bottom - top) == (32, 16)


class TestReadOnly:
    def test_requests_never_mutate_checkpoints(self, client, ckpt_paths):
        before = [p.read_bytes() for p in ckpt_paths]
        client.post("/translate", json={"model": "scalar", "image": png_b64(), "z": 0.9})
        client.post(
            "/translate",
            json={"model": "styles", "image": png_b64(), "z": [0.7, 0.1, 0.1, 0.1]},
        )
        client.get("/info")
        after = [p.read_bytes() for p in ckpt_paths]
        assert before == after


class TestSweep:
    def test_grid_order_and_count(self, client):
        grid = [0.0, 0.3, 0.6, 0.8, 1.0]
        r = client.post("/sweep", json={"model": "scalar", "image": png_b64(), "z_values": grid})
        assert r.status_code == 200
        results = r.json()["results"]
        assert [res["z"] for res in results] == grid
        assert len(results) == 5

    def test_empty_grid(self, client):
        r = client.post("/sweep", json={"model": "scalar", "image": png_b64(), "z_values": []})
        assert r.status_code == 200
        assert r.json()["results"] == []

    def test_sweep_equals_composed_translates(self, client):
        image = png_b64()
        grid = [0.0, 0.5, 1.0]
        sweep = client.post(
            "/sweep", json={"model": "scalar", "image": image, "z_values": grid}
        ).json()["results"]
        for res, z in zip(sweep, grid):
            single = client.post(
                "/translate", json={"model": "scalar", "image": image, "z": z}
            ).json()
            assert res["image"] == single["image"]

    def test_invalid_grid_value_propagates(self, client):
        r = client.post(
            "/sweep", json={"model": "scalar", "image": png_b64(), "z_values": [0.5, 2.0]}
        )
        assert r.status_code == 422
