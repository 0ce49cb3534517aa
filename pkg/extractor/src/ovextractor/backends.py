"""Encoder and mask-generator backends, selected by model identifier.

The `toy-color/v1` pair is hermetic and deterministic: masks are the
connected flat-color regions of a rendered capture, embeddings live in a
fixed color-moment space, and text prototypes come from color words in the
category names.  It exists so the full extraction path is testable without
downloading any pretrained weights.

`clip/<model>` adapts a Hugging Face CLIP checkpoint for the embeddings
(masks still come from a mask-generator backend); it is import-guarded and
records the exact identifier in the bundle manifest.
"""

from __future__ import annotations

import numpy as np

from .capture import ExtractError

# color-moment feature: (r, g, b, r^2, g^2, b^2, rg, gb, rb, 1)
TOY_DIM = 10

COLOR_WORDS = {
    "red": (1.0, 0.0, 0.0),
    "green": (0.0, 1.0, 0.0),
    "blue": (0.0, 0.0, 1.0),
    "yellow": (1.0, 1.0, 0.0),
    "cyan": (0.0, 1.0, 1.0),
    "magenta": (1.0, 0.0, 1.0),
    "white": (1.0, 1.0, 1.0),
    "gray": (0.5, 0.5, 0.5),
    "orange": (1.0, 0.5, 0.0),
    "purple": (0.5, 0.0, 1.0),
}


def _color_moments(rgb: np.ndarray) -> np.ndarray:
    r, g, b = (float(x) for x in rgb)
    return np.array([r, g, b, r * r, g * g, b * b, r * g, g * b, r * b, 1.0])


class ToyColorEncoder:
    """Embeds mask regions and color-word categories in one moment space."""

    identifier = "toy-color/v1"
    prompt_template = "{}"
    dim = TOY_DIM

    def encode_text(self, categories: list[str]) -> np.ndarray:
        rows = []
        for name in categories:
            words = name.lower().replace("_", " ").split()
            match = next((COLOR_WORDS[w] for w in words if w in COLOR_WORDS), None)
            if match is None:
                raise ExtractError(
                    f"toy encoder needs a color word in category name {name!r}"
                )
            rows.append(_color_moments(np.array(match)))
        return np.stack(rows).astype(np.float32)

    def encode_region(self, color: np.ndarray, mask: np.ndarray) -> np.ndarray:
        weights = mask.reshape(-1)
        flat = color.reshape(-1, 3)
        total = weights.sum()
        if total == 0:
            raise ExtractError("toy encoder got an empty mask region")
        mean_rgb = (flat * weights[:, None]).sum(axis=0) / total
        return _color_moments(mean_rgb).astype(np.float32)


class ToyColorMasks:
    """One binary mask per distinct flat color, background excluded.

    The background color is taken from the image corners; regions smaller
    than `min_pixels` are dropped.  Masks are emitted in ascending order of
    their packed RGB value, so output is deterministic.
    """

    identifier = "toy-color/v1"

    def __init__(self, min_pixels: int = 12):
        self.min_pixels = min_pixels

    def masks(self, color: np.ndarray) -> list[np.ndarray]:
        quant = np.round(color * 255.0).astype(np.int64)
        packed = (quant[..., 0] << 16) | (quant[..., 1] << 8) | quant[..., 2]
        corners = [packed[0, 0], packed[0, -1], packed[-1, 0], packed[-1, -1]]
        background = np.bincount(np.asarray(corners)).argmax()
        out = []
        for value in np.unique(packed):
            if value == background:
                continue
            region = packed == value
            if int(region.sum()) < self.min_pixels:
                continue
            out.append(region.astype(np.float32))
        return out


class ClipEncoder:
    """Hugging Face CLIP adapter; requires transformers weights on disk."""

    prompt_template = "a {} in a scene"

    def __init__(self, identifier: str):
        self.identifier = identifier
        model_name = identifier.split("/", 1)[1]
        try:
            import torch  # noqa: F401
            from transformers import CLIPModel, CLIPProcessor
        except ImportError as exc:
            raise ExtractError(f"clip backend needs transformers+torch: {exc}") from exc
        try:
            self._model = CLIPModel.from_pretrained(model_name)
            self._processor = CLIPProcessor.from_pretrained(model_name)
        except Exception as exc:
            raise ExtractError(f"cannot load clip checkpoint {model_name!r}: {exc}") from exc
        self._model.eval()
        self.dim = int(self._model.config.projection_dim)

    def encode_text(self, categories: list[str]) -> np.ndarray:
        import torch

        prompts = [self.prompt_template.format(c) for c in categories]
        inputs = self._processor(text=prompts, return_tensors="pt", padding=True)
        with torch.no_grad():
            feats = self._model.get_text_features(**inputs)
        return feats.numpy().astype(np.float32)

    def encode_region(self, color: np.ndarray, mask: np.ndarray) -> np.ndarray:
        import torch
        from PIL import Image

        ys, xs = np.nonzero(mask > 0.5)
        if ys.size == 0:
            raise ExtractError("clip encoder got an empty mask region")
        crop = color[ys.min() : ys.max() + 1, xs.min() : xs.max() + 1]
        img = Image.fromarray(np.round(crop * 255.0).astype(np.uint8))
        inputs = self._processor(images=img, return_tensors="pt")
        with torch.no_grad():
            feats = self._model.get_image_features(**inputs)
        return feats.numpy()[0].astype(np.float32)


def make_encoder(identifier: str):
    if identifier == ToyColorEncoder.identifier:
        return ToyColorEncoder()
    if identifier.startswith("clip/"):
        return ClipEncoder(identifier)
    raise ExtractError(f"unknown encoder identifier {identifier!r}")


def make_mask_generator(identifier: str):
    if identifier == ToyColorMasks.identifier:
        return ToyColorMasks()
    raise ExtractError(f"unknown mask generator identifier {identifier!r}")
