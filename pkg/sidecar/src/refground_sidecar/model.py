"""Deterministic toy vision-language scorers with gradient support.

Each model embeds an image by attention-pooling per-patch color features and
embeds text by hashing tokens into a fixed table, then scores the pair as a
scaled cosine similarity. Weights are loaded from a hash-pinned archive, so
identical requests always produce identical logits. The attention map doubles
as the saliency matrix for gradient-based region scoring.
"""

from __future__ import annotations

import hashlib
import io
import math

import numpy as np
import torch
from PIL import Image

from .config import ModelSpec


def _hash_token(token: str, vocab: int) -> int:
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") % vocab


class ToyScorer:
    def __init__(self, spec: ModelSpec, device: str = "cpu") -> None:
        self.spec = spec
        self.device = torch.device(device)
        arrays = np.load(io.BytesIO(spec.verified_bytes()))
        self.w1 = torch.from_numpy(arrays["w1"]).to(self.device)
        self.b1 = torch.from_numpy(arrays["b1"]).to(self.device)
        self.v = torch.from_numpy(arrays["v"]).to(self.device)
        self.w2 = torch.from_numpy(arrays["w2"]).to(self.device)
        self.w_text = torch.from_numpy(arrays["w_text"]).to(self.device)
        self.vocab = self.w_text.shape[0]
        if spec.input_width % spec.patch or spec.input_height % spec.patch:
            raise ValueError("input resolution must be divisible by the patch size")
        self.grid_h = spec.input_height // spec.patch
        self.grid_w = spec.input_width // spec.patch

    # --- encoders ---

    def preprocess(self, image: Image.Image) -> torch.Tensor:
        """Resize to the declared input resolution (bicubic) and scale to [0, 1]."""
        resized = image.convert("RGB").resize(
            (self.spec.input_width, self.spec.input_height), Image.BICUBIC
        )
        arr = np.asarray(resized, dtype=np.float32) / 255.0
        return torch.from_numpy(arr).to(self.device)

    def patch_features(self, pixels: torch.Tensor) -> torch.Tensor:
        """Mean RGB per patch, shape (grid_h, grid_w, 3)."""
        p = self.spec.patch
        h, w, _ = pixels.shape
        patches = pixels.reshape(h // p, p, w // p, p, 3)
        return patches.mean(dim=(1, 3))

    def attention_and_values(
        self, feats: torch.Tensor
    ) -> tuple[torch.Tensor, torch.Tensor]:
        """Attention map over patches plus per-patch value vectors."""
        hidden = torch.tanh(feats @ self.w1.T + self.b1)
        scores = hidden @ self.v
        attn = torch.softmax(scores.reshape(-1), dim=0).reshape(scores.shape)
        values = hidden @ self.w2.T
        return attn, values

    def encode_text(self, text: str) -> torch.Tensor:
        tokens = text.lower().split()
        if not tokens:
            raise ValueError("text must contain at least one token")
        rows = [self.w_text[_hash_token(tok, self.vocab)] for tok in tokens]
        emb = torch.stack(rows).mean(dim=0)
        return emb / emb.norm().clamp_min(1e-12)

    # --- scoring ---

    def image_embedding(self, attn: torch.Tensor, values: torch.Tensor) -> torch.Tensor:
        pooled = (attn.unsqueeze(-1) * values).sum(dim=(0, 1))
        return pooled / pooled.norm().clamp_min(1e-12)

    def logit(self, image: Image.Image, text: str) -> float:
        with torch.no_grad():
            feats = self.patch_features(self.preprocess(image))
            attn, values = self.attention_and_values(feats)
            x = self.image_embedding(attn, values)
            y = self.encode_text(text)
            return float(self.spec.beta * (x @ y))

    def saliency(self, image: Image.Image, text: str) -> np.ndarray:
        """Gradient-weighted attention map upsampled to the input image size.

        The attention matrix M is detached into a leaf, the logit recomputed
        through it, and the map is M * dL/dM, bicubically interpolated to the
        original (pre-resize) image dimensions.
        """
        feats = self.patch_features(self.preprocess(image))
        attn, values = self.attention_and_values(feats)
        leaf = attn.detach().clone().requires_grad_(True)
        x = self.image_embedding(leaf, values.detach())
        y = self.encode_text(text)
        logit = self.spec.beta * (x @ y)
        logit.backward()
        gradcam = (leaf * leaf.grad).detach()
        width, height = image.size
        upsampled = torch.nn.functional.interpolate(
            gradcam.unsqueeze(0).unsqueeze(0),
            size=(height, width),
            mode="bicubic",
            align_corners=False,
        )[0, 0]
        return upsampled.cpu().numpy()


def region_score(
    saliency: np.ndarray, box: tuple[float, float, float, float], alpha: float
) -> float:
    """Sum the saliency map over a box, scaled by 1 / (image area ** alpha)."""
    height, width = saliency.shape
    x1 = int(min(max(math.floor(box[0] + 0.5), 0), width))
    x2 = int(min(max(math.floor(box[2] + 0.5), 0), width))
    y1 = int(min(max(math.floor(box[1] + 0.5), 0), height))
    y2 = int(min(max(math.floor(box[3] + 0.5), 0), height))
    if x2 <= x1 or y2 <= y1:
        return 0.0
    area = float(width * height)
    return float(saliency[y1:y2, x1:x2].sum() / area**alpha)
