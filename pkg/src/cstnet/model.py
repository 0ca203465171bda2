"""Full network: a 5-stage residual backbone with co-saliency and relation
modules inserted after configurable stages, clip-level average pooling, and a
two-layer head (embedding + identity classifier).

The backbone is a compact stand-in with the usual 5-stage interface: a stem
(conv + BN + ReLU) followed by four residual stages of two 3x3 convolutions
with a projection shortcut.  Stage channel counts, strides, clip length,
frame size and all insertion hyperparameters live in ``CstnetConfig``; the
large-scale settings remain expressible through the same fields.

Frames flow through stages independently (2d convs); the clip structure only
matters to the inserted modules and to the final temporal average.  Retrieval
uses Euclidean distance on the pre-classifier embedding.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .csl import CoSaliencyLearning, CslConfig
from .errors import ConfigError, ContractError, DimensionError
from .nn import BatchNorm2d, Conv2d, Linear, Module
from .sti import SpatialTemporalInteraction, StiConfig
from .tensor import Tensor, add, adaptive_avg_pool2d, constant, no_grad, relu, reshape, scale, tmean


@dataclass(frozen=True)
class CstnetConfig:
    """Architecture and insertion hyperparameters with small-scale defaults."""

    num_identities: int
    clip_len: int = 4
    frame_h: int = 32
    frame_w: int = 16
    in_channels: int = 3
    stage_channels: tuple = (8, 16, 32, 64, 128)
    stage_strides: tuple = (1, 2, 2, 2, 2)
    insertion_points: tuple = (2, 3, 4)
    with_csl: bool = True
    with_sti: bool = True
    embedding_dim: int = 64
    csl_channels: int = 16          # C_L
    csl_pool_h: int = 4             # H_L
    csl_pool_w: int = 2             # W_L
    ncc_eps: float = 1e-5
    sti_channels: int = 16          # C_1
    sti_pool_h: int = 4             # H_1
    sti_pool_w: int = 2             # W_1
    input_scale: float = 1.0
    dtype: str = "f32"
    seed: int = 0

    def __post_init__(self):
        if self.num_identities < 1:
            raise ConfigError("num_identities must be >= 1")
        if self.clip_len < 1:
            raise ConfigError("clip_len must be >= 1")
        if len(self.stage_channels) != 5 or len(self.stage_strides) != 5:
            raise ConfigError("exactly 5 stage channel counts and strides are required")
        if not set(self.insertion_points) <= set(range(1, 6)):
            raise ConfigError(f"insertion_points must be within 1..5, got {self.insertion_points}")
        if self.embedding_dim < 1:
            raise ConfigError("embedding_dim must be >= 1")
        if self.dtype not in ("f32", "f64"):
            raise ConfigError(f"dtype must be 'f32' or 'f64', got {self.dtype!r}")

    @property
    def np_dtype(self):
        return np.float32 if self.dtype == "f32" else np.float64

    def stage_dims(self) -> list[tuple[int, int, int]]:
        """(channels, h, w) after each stage, 0-indexed by stage - 1."""
        h, w = self.frame_h, self.frame_w
        dims = []
        for c, s in zip(self.stage_channels, self.stage_strides):
            h = (h + 2 - 3) // s + 1    # 3x3 conv, padding 1
            w = (w + 2 - 3) // s + 1
            dims.append((c, h, w))
        return dims

    def csl_config_for(self, stage: int) -> CslConfig:
        c, h, w = self.stage_dims()[stage - 1]
        return CslConfig(c_in=c, c_l=min(self.csl_channels, c),
                         h_l=min(self.csl_pool_h, h), w_l=min(self.csl_pool_w, w),
                         ncc_eps=self.ncc_eps)

    def sti_config_for(self, stage: int) -> StiConfig:
        c, h, w = self.stage_dims()[stage - 1]
        return StiConfig(c_in=c, c_1=min(self.sti_channels, c),
                         h_1=min(self.sti_pool_h, h), w_1=min(self.sti_pool_w, w))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "CstnetConfig":
        d = dict(d)
        for key in ("stage_channels", "stage_strides", "insertion_points"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)

    @classmethod
    def paper_scale(cls, num_identities: int, **overrides) -> "CstnetConfig":
        """Full-scale hyperparameters (256x128 frames, T=8, wide stages)."""
        base = dict(num_identities=num_identities, clip_len=8, frame_h=256, frame_w=128,
                    stage_channels=(64, 256, 512, 1024, 2048),
                    stage_strides=(2, 2, 2, 2, 2), embedding_dim=512,
                    csl_channels=256, csl_pool_h=16, csl_pool_w=8,
                    sti_channels=128, sti_pool_h=16, sti_pool_w=8,
                    input_scale=1.0 / 256.0)
        base.update(overrides)
        return cls(**base)


class ResidualStage(Module):
    """Two 3x3 convs with BN/ReLU and a projection shortcut."""

    def __init__(self, c_in: int, c_out: int, stride: int, *, rng, dtype):
        super().__init__()
        self.conv1 = Conv2d(c_in, c_out, 3, stride=stride, padding=1, bias=False, rng=rng, dtype=dtype)
        self.bn1 = BatchNorm2d(c_out, dtype=dtype)
        self.conv2 = Conv2d(c_out, c_out, 3, stride=1, padding=1, bias=False, rng=rng, dtype=dtype)
        self.bn2 = BatchNorm2d(c_out, dtype=dtype)
        self.project = c_in != c_out or stride != 1
        if self.project:
            self.shortcut = Conv2d(c_in, c_out, 1, stride=stride, bias=False, rng=rng, dtype=dtype)
            self.bn_sc = BatchNorm2d(c_out, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        main = self.bn2(self.conv2(relu(self.bn1(self.conv1(x)))))
        side = self.bn_sc(self.shortcut(x)) if self.project else x
        return relu(add(main, side))

    __call__ = forward


class Stem(Module):
    """Stage 1: plain conv + BN + ReLU."""

    def __init__(self, c_in: int, c_out: int, stride: int, *, rng, dtype):
        super().__init__()
        self.conv = Conv2d(c_in, c_out, 3, stride=stride, padding=1, bias=False, rng=rng, dtype=dtype)
        self.bn = BatchNorm2d(c_out, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        return relu(self.bn(self.conv(x)))

    __call__ = forward


class Cstnet(Module):
    def __init__(self, cfg: CstnetConfig):
        super().__init__()
        self.cfg = cfg
        rng = np.random.default_rng(np.random.PCG64(cfg.seed))
        dtype = cfg.np_dtype
        chans = cfg.stage_channels
        strides = cfg.stage_strides
        self.stage1 = Stem(cfg.in_channels, chans[0], strides[0], rng=rng, dtype=dtype)
        self.stage2 = ResidualStage(chans[0], chans[1], strides[1], rng=rng, dtype=dtype)
        self.stage3 = ResidualStage(chans[1], chans[2], strides[2], rng=rng, dtype=dtype)
        self.stage4 = ResidualStage(chans[2], chans[3], strides[3], rng=rng, dtype=dtype)
        self.stage5 = ResidualStage(chans[3], chans[4], strides[4], rng=rng, dtype=dtype)
        dims = cfg.stage_dims()
        for stage in sorted(cfg.insertion_points):
            _, h, w = dims[stage - 1]
            if cfg.with_csl:
                mod = CoSaliencyLearning(cfg.csl_config_for(stage), cfg.clip_len, h, w,
                                         rng=rng, dtype=dtype)
                setattr(self, f"csl{stage}", mod)
            if cfg.with_sti:
                setattr(self, f"sti{stage}", SpatialTemporalInteraction(
                    cfg.sti_config_for(stage), rng=rng, dtype=dtype))
        self.embed = Linear(chans[4], cfg.embedding_dim, rng=rng, dtype=dtype)
        self.classify = Linear(cfg.embedding_dim, cfg.num_identities, rng=rng, dtype=dtype)

    def _stage(self, i: int):
        return getattr(self, f"stage{i}")

    def forward(self, clips) -> tuple[Tensor, Tensor]:
        """(B, T, 3, H, W) clips -> (features (B, E), logits (B, K))."""
        x = clips if isinstance(clips, Tensor) else constant(clips, dtype=self.cfg.np_dtype)
        cfg = self.cfg
        if x.ndim != 5:
            raise ContractError(f"expected (B, T, C, H, W) clips, got {x.shape}")
        b, t, c, h, w = x.shape
        if t != cfg.clip_len:
            raise ContractError(f"model expects {cfg.clip_len} frames per clip, got {t}")
        if c != cfg.in_channels or (h, w) != (cfg.frame_h, cfg.frame_w):
            raise ContractError(f"model expects {cfg.in_channels}x{cfg.frame_h}x{cfg.frame_w} "
                                f"frames, got {c}x{h}x{w}")
        if cfg.input_scale != 1.0:
            x = scale(x, cfg.input_scale)
        x = reshape(x, (b * t, c, h, w))
        dims = cfg.stage_dims()
        for stage in range(1, 6):
            x = self._stage(stage)(x)
            if stage in cfg.insertion_points and (cfg.with_csl or cfg.with_sti):
                sc, sh, sw = dims[stage - 1]
                clip_view = reshape(x, (b, t, sc, sh, sw))
                if cfg.with_csl:
                    clip_view = getattr(self, f"csl{stage}")(clip_view)
                if cfg.with_sti:
                    clip_view = getattr(self, f"sti{stage}")(clip_view)
                x = reshape(clip_view, (b * t, sc, sh, sw))
        pooled = reshape(adaptive_avg_pool2d(x, 1, 1), (b, t, cfg.stage_channels[4]))
        clip_feat = tmean(pooled, axis=1)             # (B, C5)
        features = self.embed(clip_feat)              # (B, E)
        logits = self.classify(features)              # (B, K)
        return features, logits

    __call__ = forward

    def embed_clips(self, clips: np.ndarray, batch_size: int = 32) -> np.ndarray:
        """Deterministic eval-mode embeddings for retrieval, as numpy."""
        was_training = self.training
        self.eval()
        out = []
        with no_grad():
            for start in range(0, len(clips), batch_size):
                feats, _ = self.forward(clips[start:start + batch_size])
                out.append(feats.data.copy())
        if was_training:
            self.train()
        return np.concatenate(out, axis=0) if out else np.zeros((0, self.cfg.embedding_dim))

    def parameter_census(self) -> dict[str, int]:
        """Exact parameter counts per top-level component plus 'total'."""
        census: dict[str, int] = {}
        for name, p in self.named_parameters():
            top = name.split(".", 1)[0]
            census[top] = census.get(top, 0) + p.size
        census["total"] = sum(v for k, v in census.items() if k != "total")
        return census


def pairwise_distances(features: np.ndarray) -> np.ndarray:
    """Euclidean distance matrix with an exactly zero diagonal."""
    f = np.asarray(features, dtype=np.float64)
    if f.ndim != 2:
        raise DimensionError(f"expected (n, d) features, got {f.shape}")
    if not np.isfinite(f).all():
        raise ContractError("pairwise_distances requires finite features")
    sq = (f * f).sum(axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (f @ f.T)
    np.maximum(d2, 0.0, out=d2)
    d = np.sqrt(d2)
    np.fill_diagonal(d, 0.0)
    return d
