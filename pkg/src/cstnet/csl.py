"""Co-saliency learning: gate each frame's features by how well its local
descriptors correlate with every other frame of the clip.

Per clip the stage features (T, C, H, W) are reduced along two routes:

* a spatial route (1x1 conv + BN + ReLU) keeping full H x W but only C_L
  channels, whose per-position channel vectors act as local descriptors;
* a channel route (adaptive average pool to H_L x W_L, then 1x1 conv + BN +
  ReLU) keeping all C channels, whose per-channel spatial maps act as
  descriptors.

For every frame t, each descriptor is compared by normalized cross
correlation against all descriptors of the other T-1 frames, stacked into a
correlation volume ((T-1)*H*W score channels per position for the spatial
route, (T-1)*C per channel for the channel route; slots ordered by source
frame ascending skipping t, then row-major position / channel index).  A 1x1
convolution summarizes each volume into a spatial logit map (1 x H x W) and a
channel logit vector (C x 1 x 1); the co-saliency gate is
``sigmoid(spatial_logits * channel_logits)`` broadcast to C x H x W and is
multiplied elementwise with the input features.  Single-frame clips have no
co-frames: both logit maps default to zero, a neutral 0.5 gate.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import faults
from .errors import ConfigError, ContractError, DimensionError
from .nn import BatchNorm2d, Conv2d, Module
from .tensor import (Tensor, adaptive_avg_pool2d, concat, index_select, matmul, mul,
                     neg, permute, relu, reshape, scale, sigmoid, standardize)


@dataclass(frozen=True)
class CslConfig:
    """Dimension-reduction and correlation settings for one insertion point."""

    c_in: int
    c_l: int
    h_l: int
    w_l: int
    ncc_eps: float = 1e-5

    def validate(self, feat_h: int, feat_w: int):
        if self.c_l < 1 or self.c_l > self.c_in:
            raise ConfigError(f"c_l must be in [1, c_in={self.c_in}], got {self.c_l}")
        if self.h_l > feat_h or self.w_l > feat_w:
            raise ConfigError(f"reduced extents ({self.h_l}, {self.w_l}) exceed feature "
                              f"map ({feat_h}, {feat_w})")
        if self.h_l * self.w_l > feat_h * feat_w:
            raise ConfigError("reduced spatial size must not exceed the feature map size")
        if self.h_l * self.w_l < 2:
            raise ConfigError("channel descriptors need at least 2 spatial positions")
        if self.ncc_eps <= 0:
            raise ConfigError(f"ncc_eps must be positive, got {self.ncc_eps}")


@dataclass
class CoSaliencyAttention:
    """Per-frame spatial logits, channel logits, and the combined gate.

    z_s: (..., T, 1, H, W) spatial logit maps
    z_c: (..., T, C, 1, 1) channel logit vectors
    z:   (..., T, C, H, W) sigmoid gate, entries strictly in (0, 1)
    """

    z_s: Tensor
    z_c: Tensor
    z: Tensor


def ncc(p, q, eps: float = 1e-5) -> float:
    """Normalized cross correlation of two descriptors.

    (1/d) * sum((p - mean_p) * (q - mean_q)) / ((std_p + eps) * (std_q + eps))
    with population standard deviations; eps guards constant descriptors.
    Robust to positive affine rescaling of either argument.
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape or p.ndim != 1:
        raise DimensionError(f"ncc: descriptors must be equal-length vectors, got "
                             f"{p.shape} and {q.shape}")
    d = p.size
    if d < 2:
        raise ContractError("ncc: descriptors need at least 2 entries")
    if eps <= 0:
        raise ContractError("ncc: eps must be positive")
    pc = p - p.mean()
    qc = q - q.mean()
    value = float((pc * qc).sum() / d / ((pc.std() + eps) * (qc.std() + eps)))
    if faults.is_active("ncc-sign-flip"):
        value = -value
    return value


def _standardized_spatial(desc: Tensor, eps: float) -> Tensor:
    """(B, T, C_L, H, W) -> (B, T, H*W, C_L) mean-free unit-std descriptors."""
    b, t, c_l, h, w = desc.shape
    flat = reshape(permute(desc, (0, 1, 3, 4, 2)), (b, t, h * w, c_l))
    return standardize(flat, axis=-1, eps=eps)


def _standardized_channel(desc: Tensor, eps: float) -> Tensor:
    """(B, T, C, H_L, W_L) -> (B, T, C, H_L*W_L) standardized per channel."""
    b, t, c, h_l, w_l = desc.shape
    flat = reshape(desc, (b, t, c, h_l * w_l))
    return standardize(flat, axis=-1, eps=eps)


def _volume_for_frame(nd: Tensor, t: int) -> Tensor:
    """NCC scores of frame t's descriptors against all other frames.

    nd is (B, T, n_desc, d) standardized; returns (B, (T-1)*n_desc, n_desc)
    where rows run over co-frames ascending (skipping t) then descriptor
    index, and columns index frame t's descriptors.
    """
    b, frames, n_desc, d = nd.shape
    others_idx = [k for k in range(frames) if k != t]
    others = reshape(index_select(nd, 1, others_idx), (b, (frames - 1) * n_desc, d))
    me = permute(reshape(index_select(nd, 1, [t]), (b, n_desc, d)), (0, 2, 1))
    vol = scale(matmul(others, me), 1.0 / d)
    if faults.is_active("ncc-sign-flip"):
        vol = neg(vol)
    return vol


def build_spatial_volume(spatial_desc: Tensor, frame: int, eps: float = 1e-5) -> Optional[Tensor]:
    """Correlation volume ((T-1)*H*W, H, W) of one frame vs. the rest.

    ``spatial_desc`` is a single clip's (T, C_L, H, W) descriptor stack.
    Returns None for single-frame clips (no co-frames to correlate with).
    """
    if spatial_desc.ndim != 4:
        raise DimensionError(f"expected (T, C_L, H, W) descriptors, got {spatial_desc.shape}")
    t_len, c_l, h, w = spatial_desc.shape
    if not 0 <= frame < t_len:
        raise ContractError(f"frame {frame} out of range for {t_len} frames")
    if t_len == 1:
        return None
    nd = _standardized_spatial(reshape(spatial_desc, (1,) + spatial_desc.shape), eps)
    vol = _volume_for_frame(nd, frame)
    return reshape(vol, ((t_len - 1) * h * w, h, w))


def build_channel_volume(channel_desc: Tensor, frame: int, eps: float = 1e-5) -> Optional[Tensor]:
    """Correlation volume ((T-1)*C, C, 1, 1) of one frame's channels vs. the rest.

    Mirrors ``build_spatial_volume`` with channels as descriptors: each
    channel's flattened H_L*W_L map is compared against every channel of
    every other frame.  Returns None for single-frame clips.
    """
    if channel_desc.ndim != 4:
        raise DimensionError(f"expected (T, C, H_L, W_L) descriptors, got {channel_desc.shape}")
    t_len, c, h_l, w_l = channel_desc.shape
    if h_l * w_l < 2:
        raise ContractError("channel descriptors need at least 2 spatial positions")
    if not 0 <= frame < t_len:
        raise ContractError(f"frame {frame} out of range for {t_len} frames")
    if t_len == 1:
        return None
    nd = _standardized_channel(reshape(channel_desc, (1,) + channel_desc.shape), eps)
    vol = _volume_for_frame(nd, frame)
    return reshape(vol, ((t_len - 1) * c, c, 1, 1))


def apply_cosaliency(f: Tensor, attention: CoSaliencyAttention) -> Tensor:
    """Gate features with the combined co-saliency map (pure multiplication)."""
    if f.shape != attention.z.shape:
        raise DimensionError(f"feature/gate shape mismatch: {f.shape} vs {attention.z.shape}")
    return mul(f, attention.z)


class CoSaliencyLearning(Module):
    """Correlation-driven spatial-channel gating for one backbone stage."""

    def __init__(self, cfg: CslConfig, clip_len: int, feat_h: int, feat_w: int, *,
                 rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        cfg.validate(feat_h, feat_w)
        if clip_len < 1:
            raise ConfigError(f"clip_len must be >= 1, got {clip_len}")
        self.cfg = cfg
        self.clip_len = clip_len
        self.feat_h = feat_h
        self.feat_w = feat_w
        self.reduce_spatial = Conv2d(cfg.c_in, cfg.c_l, 1, rng=rng, dtype=dtype)
        self.bn_spatial = BatchNorm2d(cfg.c_l, dtype=dtype)
        self.reduce_channel = Conv2d(cfg.c_in, cfg.c_in, 1, rng=rng, dtype=dtype)
        self.bn_channel = BatchNorm2d(cfg.c_in, dtype=dtype)
        if clip_len >= 2:
            n_spatial = (clip_len - 1) * feat_h * feat_w
            n_channel = (clip_len - 1) * cfg.c_in
            self.summarize_spatial = Conv2d(n_spatial, 1, 1, rng=rng, dtype=dtype)
            self.summarize_channel = Conv2d(n_channel, 1, 1, rng=rng, dtype=dtype)

    def reduce_dims(self, f: Tensor) -> tuple[Tensor, Tensor]:
        """(B, T, C, H, W) -> spatial (B, T, C_L, H, W), channel (B, T, C, H_L, W_L)."""
        if f.ndim != 5:
            raise DimensionError(f"expected (B, T, C, H, W) features, got {f.shape}")
        b, t, c, h, w = f.shape
        if c != self.cfg.c_in:
            raise DimensionError(f"expected {self.cfg.c_in} channels, got {c}")
        if self.cfg.h_l > h or self.cfg.w_l > w:
            raise ConfigError(f"reduced extents ({self.cfg.h_l}, {self.cfg.w_l}) exceed "
                              f"feature map ({h}, {w})")
        frames = reshape(f, (b * t, c, h, w))
        sd = relu(self.bn_spatial(self.reduce_spatial(frames)))
        pooled = adaptive_avg_pool2d(frames, self.cfg.h_l, self.cfg.w_l)
        cd = relu(self.bn_channel(self.reduce_channel(pooled)))
        return (reshape(sd, (b, t, self.cfg.c_l, h, w)),
                reshape(cd, (b, t, c, self.cfg.h_l, self.cfg.w_l)))

    def summarize_attention(self, spatial_vols: Optional[Tensor],
                            channel_vols: Optional[Tensor]) -> CoSaliencyAttention:
        """Collapse stacked per-frame volumes into the spatial-channel gate.

        ``spatial_vols``: (B, T, (T-1)*H*W, H, W); ``channel_vols``:
        (B, T, (T-1)*C, C, 1).  Either may be None (single-frame clips),
        in which case the corresponding logits are zero.
        """
        c = self.cfg.c_in
        h, w = self.feat_h, self.feat_w
        if spatial_vols is None or channel_vols is None:
            if not (spatial_vols is None and channel_vols is None):
                raise DimensionError("spatial and channel volumes must both be present or absent")
            dtype = self.reduce_spatial.weight.dtype
            z_s = Tensor(np.zeros((1, 1, 1, h, w), dtype=dtype))
            z_c = Tensor(np.zeros((1, 1, c, 1, 1), dtype=dtype))
            z = sigmoid(mul(z_s, z_c))
            return CoSaliencyAttention(z_s=z_s, z_c=z_c, z=z)
        b, t = spatial_vols.shape[0], spatial_vols.shape[1]
        if channel_vols.shape[0] != b or channel_vols.shape[1] != t:
            raise DimensionError(f"volume stacks disagree on frames: {spatial_vols.shape} "
                                 f"vs {channel_vols.shape}")
        if t != self.clip_len:
            raise DimensionError(f"module was built for {self.clip_len} frames, got {t}")
        sv = reshape(spatial_vols, (b * t,) + spatial_vols.shape[2:])
        cv = reshape(channel_vols, (b * t,) + channel_vols.shape[2:])
        z_s = reshape(self.summarize_spatial(sv), (b, t, 1, h, w))
        z_c = reshape(self.summarize_channel(cv), (b, t, c, 1, 1))
        z = sigmoid(mul(z_s, z_c))
        return CoSaliencyAttention(z_s=z_s, z_c=z_c, z=z)

    def attention(self, f: Tensor) -> CoSaliencyAttention:
        """Compute the co-saliency gate for (B, T, C, H, W) stage features."""
        b, t, c, h, w = f.shape
        if t != self.clip_len:
            raise DimensionError(f"module was built for {self.clip_len} frames, got {t}")
        if (h, w) != (self.feat_h, self.feat_w):
            raise DimensionError(f"module was built for {self.feat_h}x{self.feat_w} maps, "
                                 f"got {h}x{w}")
        sd, cd = self.reduce_dims(f)
        if t == 1:
            dtype = self.reduce_spatial.weight.dtype
            z_s = Tensor(np.zeros((b, 1, 1, h, w), dtype=dtype))
            z_c = Tensor(np.zeros((b, 1, c, 1, 1), dtype=dtype))
            return CoSaliencyAttention(z_s=z_s, z_c=z_c, z=sigmoid(mul(z_s, z_c)))
        nd_s = _standardized_spatial(sd, self.cfg.ncc_eps)
        nd_c = _standardized_channel(cd, self.cfg.ncc_eps)
        s_vols = []
        c_vols = []
        for frame in range(t):
            sv = _volume_for_frame(nd_s, frame)            # (B, (T-1)HW, HW)
            s_vols.append(reshape(sv, (b, 1, (t - 1) * h * w, h, w)))
            cv = _volume_for_frame(nd_c, frame)            # (B, (T-1)C, C)
            c_vols.append(reshape(cv, (b, 1, (t - 1) * c, c, 1)))
        return self.summarize_attention(concat(s_vols, 1), concat(c_vols, 1))

    def forward(self, f: Tensor) -> Tensor:
        return apply_cosaliency(f, self.attention(f))

    __call__ = forward
