"""Encoder registry: frozen vision/text models behind one interface.

Model identifiers:

* ``randproj:<dim>`` — a deterministic random-projection encoder over
  downsampled pixels (images) and byte histograms (text). No model
  weights, no network; meant for pipeline validation and tests, not for
  real accuracy numbers.
* ``clip:<checkpoint>`` — a CLIP checkpoint via transformers. Images map
  to the projected CLS pathway (`get_image_features`), text prompts to
  `get_text_features`, so both live in the shared space needed for
  zero-shot classification. ``feature="cls"`` switches images to the
  unprojected vision-tower CLS pooled output.
* ``hf:<checkpoint>`` — any transformers vision model (DINOv2/v3 style);
  images map to the CLS token of the last hidden state. No text side:
  prompt banks for such encoders need a separately aligned text model.

torch/transformers are imported lazily, only for clip:/hf: models.
Embeddings are returned exactly as the encoder produces them; any
normalization is the downstream toolkit's job.
"""

from __future__ import annotations

import numpy as np
from PIL import Image

RANDPROJ_IMAGE_SIZE = 32
_RANDPROJ_SEED = 0x5EED


class EncoderError(RuntimeError):
    pass


class RandProjEncoder:
    """Deterministic offline encoder: fixed random projections.

    Images are resized to 32x32 RGB, flattened, augmented with a constant
    channel (so no output can be the zero vector), and projected with a
    seeded Gaussian matrix. Text goes through a byte-histogram feature
    with the same treatment. Identical inputs give identical embeddings.
    """

    def __init__(self, dim: int) -> None:
        if dim < 2:
            raise EncoderError(f"randproj dim must be >= 2, got {dim}")
        self.dim = dim
        self.name = f"randproj:{dim}"
        self.preprocessing = f"RGB bilinear resize to {RANDPROJ_IMAGE_SIZE}x{RANDPROJ_IMAGE_SIZE}, /255"
        n_pixels = RANDPROJ_IMAGE_SIZE * RANDPROJ_IMAGE_SIZE * 3
        rng = np.random.default_rng(_RANDPROJ_SEED)
        self._image_proj = rng.standard_normal((n_pixels + 1, dim)).astype(np.float32)
        self._text_proj = rng.standard_normal((257, dim)).astype(np.float32)

    def encode_images(self, images: list[Image.Image]) -> np.ndarray:
        rows = []
        for img in images:
            small = img.convert("RGB").resize(
                (RANDPROJ_IMAGE_SIZE, RANDPROJ_IMAGE_SIZE), Image.BILINEAR
            )
            pixels = np.asarray(small, dtype=np.float32).reshape(-1) / 255.0
            rows.append(np.concatenate([pixels, [1.0]]))
        feats = np.stack(rows) if rows else np.zeros((0, self._image_proj.shape[0]), np.float32)
        return (feats @ self._image_proj).astype(np.float32)

    def encode_texts(self, texts: list[str]) -> np.ndarray:
        rows = []
        for text in texts:
            data = text.encode("utf-8")
            hist = np.bincount(np.frombuffer(data, dtype=np.uint8), minlength=256)
            feat = hist.astype(np.float32) / max(1, len(data))
            rows.append(np.concatenate([feat, [1.0]]))
        feats = np.stack(rows) if rows else np.zeros((0, 257), np.float32)
        return (feats @ self._text_proj).astype(np.float32)


class ClipEncoder:
    """CLIP via transformers; projected features by default."""

    def __init__(self, checkpoint: str, feature: str = "projected") -> None:
        if feature not in ("projected", "cls"):
            raise EncoderError(f"unknown clip feature {feature!r}")
        try:
            import torch
            from transformers import CLIPModel, CLIPProcessor
        except ImportError as exc:
            raise EncoderError(
                "clip models need the [hf] extra: pip install 'artemb-extract[hf]'"
            ) from exc
        try:
            self._model = CLIPModel.from_pretrained(checkpoint)
            self._processor = CLIPProcessor.from_pretrained(checkpoint)
        except Exception as exc:
            raise EncoderError(f"cannot load clip checkpoint {checkpoint!r}: {exc}") from exc
        self._model.eval()
        self._torch = torch
        self._feature = feature
        self.name = f"clip:{checkpoint}"
        self.preprocessing = type(self._processor.image_processor).__name__
        self.dim = (
            self._model.config.projection_dim
            if feature == "projected"
            else self._model.config.vision_config.hidden_size
        )

    def encode_images(self, images: list[Image.Image]) -> np.ndarray:
        inputs = self._processor(images=images, return_tensors="pt")
        with self._torch.no_grad():
            if self._feature == "projected":
                out = self._model.get_image_features(**inputs)
            else:
                out = self._model.vision_model(**inputs).pooler_output
        return out.cpu().numpy().astype(np.float32)

    def encode_texts(self, texts: list[str]) -> np.ndarray:
        inputs = self._processor(text=texts, return_tensors="pt", padding=True)
        with self._torch.no_grad():
            out = self._model.get_text_features(
                input_ids=inputs["input_ids"], attention_mask=inputs["attention_mask"]
            )
        return out.cpu().numpy().astype(np.float32)


class HfVisionEncoder:
    """Generic transformers vision model; CLS token of the last layer."""

    def __init__(self, checkpoint: str) -> None:
        try:
            import torch
            from transformers import AutoImageProcessor, AutoModel
        except ImportError as exc:
            raise EncoderError(
                "hf models need the [hf] extra: pip install 'artemb-extract[hf]'"
            ) from exc
        try:
            self._model = AutoModel.from_pretrained(checkpoint)
            self._processor = AutoImageProcessor.from_pretrained(checkpoint)
        except Exception as exc:
            raise EncoderError(f"cannot load checkpoint {checkpoint!r}: {exc}") from exc
        self._model.eval()
        self._torch = torch
        self.name = f"hf:{checkpoint}"
        self.preprocessing = type(self._processor).__name__
        self.dim = self._model.config.hidden_size

    def encode_images(self, images: list[Image.Image]) -> np.ndarray:
        inputs = self._processor(images=images, return_tensors="pt")
        with self._torch.no_grad():
            hidden = self._model(**inputs).last_hidden_state
        return hidden[:, 0, :].cpu().numpy().astype(np.float32)

    def encode_texts(self, texts: list[str]) -> np.ndarray:
        raise EncoderError(
            f"{self.name} has no text side; prompt banks need a text encoder "
            "aligned with the visual space (e.g. a clip: model)"
        )


def load_encoder(model_id: str, feature: str = "projected"):
    """Instantiate an encoder from its ``kind:spec`` identifier."""
    kind, sep, spec = model_id.partition(":")
    if not sep:
        raise EncoderError(f"model id {model_id!r} is not of the form kind:spec")
    if kind == "randproj":
        try:
            return RandProjEncoder(int(spec))
        except ValueError as exc:
            raise EncoderError(f"bad randproj dim {spec!r}") from exc
    if kind == "clip":
        return ClipEncoder(spec, feature=feature)
    if kind == "hf":
        return HfVisionEncoder(spec)
    raise EncoderError(f"unknown encoder kind {kind!r} (use randproj:, clip:, hf:)")
