"""HTTP inference service for trained translation models.

JSON endpoints with base64 PNG payloads: POST /translate, POST /sweep,
GET /info, GET /health.  Models are loaded once at startup and never
mutated; identical requests produce byte-identical responses.
"""

from __future__ import annotations

import base64
import binascii
import hashlib
import io
import time
from dataclasses import dataclass
from pathlib import Path

import torch
from fastapi import FastAPI, HTTPException
from PIL import Image
from pydantic import BaseModel

from .data import image_to_tensor, tensor_to_image
from .domainness import DomainnessError, validate_scalar, validate_vector
from .networks import translate
from .training import load_generator

MAX_IMAGE_BYTES = 8 * 1024 * 1024


@dataclass
class LoadedModel:
    model_id: str
    generator: object
    manifest: dict
    checkpoint_sha256: str

    @property
    def num_targets(self) -> int:
        return self.manifest["num_targets"]

    @property
    def image_size(self) -> int:
        return self.manifest["image_size"]

    def domains(self) -> list:
        return [self.manifest["source_name"], *self.manifest["target_names"]]


class ModelRegistry:
    """Write-once map of model id to loaded generator."""

    def __init__(self):
        self._models: dict[str, LoadedModel] = {}

    def register(self, checkpoint_path, model_id: str | None = None) -> LoadedModel:
        path = Path(checkpoint_path)
        generator, manifest = load_generator(path)
        model_id = model_id or path.stem
        if model_id in self._models:
            raise ValueError(f"model id {model_id!r} already registered")
        loaded = LoadedModel(
            model_id=model_id,
            generator=generator,
            manifest=manifest,
            checkpoint_sha256=hashlib.sha256(path.read_bytes()).hexdigest(),
        )
        self._models[model_id] = loaded
        return loaded

    def get(self, model_id: str | None) -> LoadedModel:
        if model_id is None:
            if len(self._models) == 1:
                return next(iter(self._models.values()))
            raise HTTPException(422, "model id required when multiple models are loaded")
        if model_id not in self._models:
            raise HTTPException(404, f"unknown model {model_id!r}")
        return self._models[model_id]

    def info(self) -> list:
        return [
            {
                "id": m.model_id,
                "num_targets": m.num_targets,
                "domains": m.domains(),
                "image_size": m.image_size,
                "image_channels": m.manifest["image_channels"],
                "checkpoint_sha256": m.checkpoint_sha256,
            }
            for m in self._models.values()
        ]


class TranslateRequest(BaseModel):
    image: str
    z: float | list[float]
    model: str | None = None


class SweepRequest(BaseModel):
    image: str
    z_values: list[float | list[float]]
    model: str | None = None


def _validate_z(z, model: LoadedModel):
    try:
        if model.num_targets > 1:
            if not isinstance(z, (list, tuple)):
                raise DomainnessError(
                    f"model expects a {model.num_targets}-component mixture vector"
                )
            vec = validate_vector(z)
            if vec.k != model.num_targets:
                raise DomainnessError(
                    f"mixture has {vec.k} components, model expects {model.num_targets}"
                )
            return vec
        if isinstance(z, (list, tuple)):
            if len(z) != 1:
                raise DomainnessError("model expects a scalar domainness value")
            z = z[0]
        return validate_scalar(z)
    except DomainnessError as exc:
        raise HTTPException(422, str(exc)) from exc


def _decode_image(payload_b64: str, model: LoadedModel):
    try:
        raw = base64.b64decode(payload_b64, validate=True)
    except (binascii.Error, ValueError) as exc:
        raise HTTPException(400, f"image payload is not valid base64: {exc}") from exc
    if len(raw) > MAX_IMAGE_BYTES:
        raise HTTPException(413, f"image exceeds {MAX_IMAGE_BYTES} bytes")
    try:
        img = Image.open(io.BytesIO(raw))
        img.load()
    except Exception as exc:
        raise HTTPException(400, f"image payload is not decodable: {exc}") from exc
    return img.convert("RGB" if model.manifest["image_channels"] == 3 else "L")


def _fit_to_model(img: Image.Image, size: int):
    """Aspect-preserving resize onto a size x size canvas; returns content box."""
    w, h = img.size
    if (w, h) == (size, size):
        return img, (0, 0, size, size)
    scale = size / max(w, h)
    new_w, new_h = max(1, round(w * scale)), max(1, round(h * scale))
    resized = img.resize((new_w, new_h), Image.BILINEAR)
    canvas = Image.new(img.mode, (size, size), 0)
    left = (size - new_w) // 2
    top = (size - new_h) // 2
    canvas.paste(resized, (left, top))
    return canvas, (left, top, left + new_w, top + new_h)


def _run_translate(model: LoadedModel, image_b64: str, z):
    applied = _validate_z(z, model)
    img = _decode_image(image_b64, model)
    original_size = list(img.size)
    fitted, content_box = _fit_to_model(img, model.image_size)
    x = image_to_tensor(fitted.convert("RGB"))
    if model.manifest["image_channels"] == 1:
        x = x[:1]
    with torch.no_grad():
        y = translate(x.unsqueeze(0), applied, model.generator)[0]
    if y.shape[0] == 1:
        y = y.repeat(3, 1, 1)
    buf = io.BytesIO()
    tensor_to_image(y).save(buf, format="PNG")
    z_echo = list(applied.values) if hasattr(applied, "values") else applied
    return {
        "image": base64.b64encode(buf.getvalue()).decode("ascii"),
        "z": z_echo,
        "original_size": original_size,
        "content_box": list(content_box),
        "model": model.model_id,
    }


def create_app(registry: ModelRegistry) -> FastAPI:
    app = FastAPI(title="domainflow inference service")

    @app.get("/health")
    def health():
        return {"status": "ok"}

    @app.get("/info")
    def info():
        return {"models": registry.info()}

    @app.post("/translate")
    def handle_translate(req: TranslateRequest):
        model = registry.get(req.model)
        start = time.monotonic()
        result = _run_translate(model, req.image, req.z)
        result["latency_ms"] = round((time.monotonic() - start) * 1000.0, 3)
        return result

    @app.post("/sweep")
    def handle_sweep(req: SweepRequest):
        model = registry.get(req.model)
        results = []
        for z in req.z_values:
            out = _run_translate(model, req.image, z)
            results.append({"image": out["image"], "z": out["z"]})
        return {"results": results, "model": model.model_id}

    return app


def serve(checkpoint_paths, port: int = 8000, host: str = "127.0.0.1"):
    import uvicorn

    registry = ModelRegistry()
    for p in checkpoint_paths:
        registry.register(p)
    uvicorn.run(create_app(registry), host=host, port=port)
