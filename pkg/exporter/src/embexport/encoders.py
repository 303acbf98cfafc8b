"""Image encoders producing 512-dim L2-normalized embedding vectors.

Two implementations behind one `encode(paths) -> [n x 512]` interface:

* ProjectionEncoder — a deterministic, dependency-light encoder: decode,
  resize to 64x64 RGB, center the pixel values, and project through a fixed
  seeded Gaussian matrix.  It carries no semantics but is reproducible
  everywhere, which makes it the right tool for fixtures, format conformance,
  and pipeline plumbing.
* ClipEncoder — the semantic encoder: a vision-language model checkpoint
  loaded through `transformers` (extra `embed-exporter[clip]`).  The image
  tower of a ViT-B/32 checkpoint emits exactly 512 features.  Loading is a
  hard error if the dependency or checkpoint is unavailable.

Both are deterministic for fixed weights/seed: the same image bytes always
produce the same embedding.
"""

from __future__ import annotations

import numpy as np
from PIL import Image

EMBED_DIM = 512


class EncoderLoadError(RuntimeError):
    """The requested encoder (or its checkpoint) could not be loaded."""


class ProjectionEncoder:
    """Fixed random projection of downsampled pixels, unit-normalized."""

    name = "projection-v1"

    def __init__(self, dim: int = EMBED_DIM, seed: int = 0, side: int = 64):
        self.dim = dim
        self.seed = seed
        self.side = side
        gen = np.random.Generator(np.random.PCG64(seed))
        n_pixels = side * side * 3
        self._matrix = gen.standard_normal((dim, n_pixels)) / np.sqrt(n_pixels)

    def metadata(self) -> dict:
        return {
            "encoder": self.name,
            "dim": self.dim,
            "seed": self.seed,
            "preprocessing": f"RGB, bilinear resize to {self.side}x{self.side}, pixels scaled to [0,1] and centered",
        }

    def _pixels(self, path) -> np.ndarray:
        with Image.open(path) as img:
            rgb = img.convert("RGB").resize((self.side, self.side), Image.BILINEAR)
        return np.asarray(rgb, dtype=np.float64).ravel() / 255.0 - 0.5

    def encode(self, paths: list) -> np.ndarray:
        out = np.empty((len(paths), self.dim), dtype=np.float64)
        for i, path in enumerate(paths):
            vec = self._matrix @ self._pixels(path)
            norm = float(np.linalg.norm(vec))
            if norm < 1e-12:  # degenerate (e.g. projection of a constant image landing at 0)
                vec = np.zeros(self.dim)
                vec[0] = 1.0
                norm = 1.0
            out[i] = vec / norm
        return out


class ClipEncoder:
    """Image tower of a CLIP-style checkpoint via transformers."""

    name = "clip"

    def __init__(self, checkpoint: str):
        self.checkpoint = checkpoint
        try:
            import torch  # noqa: F401
            from transformers import CLIPModel, CLIPProcessor
        except ImportError as exc:
            raise EncoderLoadError(
                f"clip encoder needs the [clip] extra (torch + transformers): {exc}"
            ) from exc
        try:
            self._model = CLIPModel.from_pretrained(checkpoint)
            self._processor = CLIPProcessor.from_pretrained(checkpoint)
        except Exception as exc:
            raise EncoderLoadError(f"cannot load checkpoint {checkpoint!r}: {exc}") from exc
        self._model.eval()
        self.dim = int(self._model.config.projection_dim)

    def metadata(self) -> dict:
        return {"encoder": self.name, "checkpoint": self.checkpoint, "dim": self.dim,
                "preprocessing": "checkpoint's own processor"}

    def encode(self, paths: list) -> np.ndarray:
        import torch

        images = []
        for path in paths:
            with Image.open(path) as img:
                images.append(img.convert("RGB"))
        inputs = self._processor(images=images, return_tensors="pt")
        with torch.no_grad():
            features = self._model.get_image_features(**inputs)
        vecs = features.double().cpu().numpy()
        return vecs / np.linalg.norm(vecs, axis=1, keepdims=True)


def make_encoder(kind: str, checkpoint: str | None = None, seed: int = 0):
    if kind == "projection":
        return ProjectionEncoder(seed=seed)
    if kind == "clip":
        if not checkpoint:
            raise EncoderLoadError("clip encoder needs --checkpoint (a local path or model id)")
        return ClipEncoder(checkpoint)
    raise EncoderLoadError(f"unknown encoder {kind!r} (expected 'projection' or 'clip')")
