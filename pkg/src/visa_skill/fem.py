"""Feature extraction: snippet sampling and a small trainable 3D-conv extractor.

Feature volumes are channels-last tensors of shape (T, H, W, C), optionally
with a leading batch axis.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .diffcore import Parameter, Tensor, as_tensor, conv3d, ops

TRAIN = "train"
EVAL = "eval"


@dataclass(frozen=True)
class SnippetPlan:
    segments: tuple[tuple[int, int], ...]  # half-open frame ranges
    starts: tuple[int, ...]
    snippet_len: int
    mode: str

    def frame_indices(self) -> np.ndarray:
        """(T, snippet_len) frame indices."""
        return np.array(self.starts)[:, None] + np.arange(self.snippet_len)[None, :]


def plan_snippets(frame_count: int, T: int, snippet_len: int = 4, mode: str = EVAL,
                  rng_seed: int | None = None) -> SnippetPlan:
    """Split a video into T contiguous segments and choose one snippet per segment.

    Training mode draws a uniform in-segment start from ``rng_seed``; eval mode
    takes the centred start (lower of the two middles when there is an even
    number of candidates).
    """
    if T < 1 or snippet_len < 1:
        raise ValueError("T and snippet_len must be positive")
    if frame_count < T * snippet_len:
        raise ValueError(f"{frame_count} frames cannot hold {T} snippets of {snippet_len}")
    if mode not in (TRAIN, EVAL):
        raise ValueError(f"unknown snippet mode {mode!r}")
    bounds = [(i * frame_count) // T for i in range(T + 1)]
    segments = tuple((bounds[i], bounds[i + 1]) for i in range(T))
    rng = np.random.default_rng(rng_seed) if mode == TRAIN else None
    starts = []
    for a, b in segments:
        n_cand = b - a - snippet_len + 1
        if mode == TRAIN:
            starts.append(a + int(rng.integers(n_cand)))
        else:
            starts.append(a + (n_cand - 1) // 2)
    return SnippetPlan(segments, tuple(starts), snippet_len, mode)


def gather_snippets(frames: np.ndarray, plan: SnippetPlan) -> np.ndarray:
    """frames (F, H, W) or (F, H, W, Cin) -> (T, L, H, W, Cin) float array."""
    frames = np.asarray(frames)
    if frames.ndim == 3:
        frames = frames[..., None]
    return frames[plan.frame_indices()].astype(np.float64)


@dataclass(frozen=True)
class ConvBlock:
    kt: int
    ks: int
    out_channels: int
    pool: bool = True


@dataclass(frozen=True)
class ExtractorConfig:
    in_channels: int = 1
    blocks: tuple[ConvBlock, ...] = field(default_factory=tuple)

    @classmethod
    def two_block(cls, snippet_len: int = 4, hidden: int = 8, channels: int = 32,
                  in_channels: int = 1) -> "ExtractorConfig":
        """Two [conv3d, ReLU, 2x2 avg-pool] blocks; the second one consumes
        whatever temporal extent the first left over."""
        kt1 = min(3, snippet_len)
        kt2 = snippet_len - kt1 + 1
        return cls(in_channels, (ConvBlock(kt1, 3, hidden), ConvBlock(kt2, 3, channels)))

    def output_hw(self, h: int, w: int) -> tuple[int, int]:
        for b in self.blocks:
            if b.pool:
                h, w = h // 2, w // 2
        return h, w

    def temporal_span(self) -> int:
        return sum(b.kt for b in self.blocks) - len(self.blocks) + 1


class FeatureExtractor:
    def __init__(self, config: ExtractorConfig, rng: np.random.Generator | None = None,
                 prefix: str = "fem"):
        self.config = config
        rng = rng if rng is not None else np.random.default_rng(0)
        self.params: list[Parameter] = []
        cin = config.in_channels
        for i, b in enumerate(config.blocks):
            fan_in = b.kt * b.ks * b.ks * cin
            w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(b.kt, b.ks, b.ks, cin, b.out_channels))
            self.params.append(Parameter(f"{prefix}.conv{i}.weight", w))
            self.params.append(Parameter(f"{prefix}.conv{i}.bias", np.zeros(b.out_channels)))
            cin = b.out_channels

    @property
    def channels(self) -> int:
        return self.config.blocks[-1].out_channels

    def __call__(self, snippets) -> Tensor:
        return extract_features(snippets, self)


def extract_features(snippets, extractor: FeatureExtractor) -> Tensor:
    """(…, T, L, H, W, Cin) snippets -> (…, T, H', W', C) feature volume."""
    x = as_tensor(snippets)
    lead = x.shape[:-5]
    T, L, H, W, cin = x.shape[-5:]
    if L != extractor.config.temporal_span():
        raise ValueError(f"snippets have {L} frames, extractor consumes {extractor.config.temporal_span()}")
    n = int(np.prod(lead, dtype=np.int64)) * T
    x = x.reshape(n, L, H, W, cin)
    for i, b in enumerate(extractor.config.blocks):
        w, bias = extractor.params[2 * i], extractor.params[2 * i + 1]
        x = ops.relu(conv3d(x, w, bias))
        if b.pool:
            x = ops.avg_pool2x2(x)
    _, d, h, w_, c = x.shape
    # temporal extent is fully consumed by the last block
    return x.reshape(*lead, T, h, w_, c)


def global_pool(X) -> Tensor:
    """Spatial mean of a (…, T, H, W, C) volume -> (…, T, C)."""
    return ops.mean(as_tensor(X), axis=(-3, -2))
