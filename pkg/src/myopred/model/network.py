"""CNN image encoder, LSTM sequence model and regression/risk heads."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .. import nn
from ..cohort.samples import check_pair
from ..nn import functional as F
from ..nn import Tensor


@dataclass(frozen=True)
class MMPNConfig:
    image_side: int = 64
    n: int = 1
    m: int = 1
    stem_channels: int = 16
    stem_kernel: int = 3
    stem_stride: int = 2
    stem_pool: bool = False
    stages: tuple = ((16, 2, 1), (32, 2, 2), (64, 2, 2))  # (channels, blocks, stride)
    lstm_hidden: int = 128
    residual_head: bool = True

    def __post_init__(self):
        check_pair(self.n, self.m)
        if not self.stages or self.feature_size <= 0:
            raise ValueError("encoder needs at least one stage with positive channels")

    @property
    def feature_size(self) -> int:
        return self.stages[-1][0]

    def with_pair(self, n: int, m: int) -> "MMPNConfig":
        return MMPNConfig(**{**self.to_dict(), "n": n, "m": m})

    def to_dict(self) -> dict:
        d = asdict(self)
        d["stages"] = [list(s) for s in self.stages]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MMPNConfig":
        d = dict(d)
        d["stages"] = tuple(tuple(s) for s in d["stages"])
        return cls(**d)

    @classmethod
    def resnet34(cls, image_side: int = 512, n: int = 1, m: int = 1) -> "MMPNConfig":
        return cls(image_side=image_side, n=n, m=m, stem_channels=64, stem_kernel=7,
                   stem_stride=2, stem_pool=True,
                   stages=((64, 3, 1), (128, 4, 2), (256, 6, 2), (512, 3, 2)), lstm_hidden=128)

    @classmethod
    def tiny(cls, n: int = 2, m: int = 2) -> "MMPNConfig":
        return cls(image_side=16, n=n, m=m, stem_channels=8, stem_kernel=3, stem_stride=1,
                   stem_pool=False, stages=((8, 1, 1),), lstm_hidden=8)


class Encoder(nn.Module):
    def __init__(self, config: MMPNConfig, rng: np.random.Generator):
        super().__init__()
        c = config
        self.stem = nn.Conv2d(3, c.stem_channels, c.stem_kernel, c.stem_stride, c.stem_kernel // 2, rng=rng)
        self.stem_bn = nn.BatchNorm2d(c.stem_channels)
        self.pool = c.stem_pool
        blocks = []
        ch = c.stem_channels
        for out_ch, count, stride in c.stages:
            for b in range(count):
                blocks.append(nn.BasicBlock(ch, out_ch, stride if b == 0 else 1, rng=rng))
                ch = out_ch
        self.blocks = blocks

    def forward(self, x: Tensor):
        """Return (GAP feature vectors, last-conv activations)."""
        out = F.relu(self.stem_bn(self.stem(x)))
        if self.pool:
            out = F.max_pool2d(out, 3, 2, 1)
        for block in self.blocks:
            out = block(out)
        return F.global_avg_pool(out), out


class MMPN(nn.Module):
    _buffers = ("ser_mean", "ser_std")

    def __init__(self, config: MMPNConfig, seed: int = 0):
        super().__init__()
        rng = np.random.default_rng(seed)
        self.config = config
        self.encoder = Encoder(config, rng)
        self.lstm = nn.LSTMCell(config.feature_size + 1, config.lstm_hidden, rng=rng)
        self.reg_head = nn.Linear(config.lstm_hidden, 1, rng=rng)
        self.cls_head = nn.Linear(config.lstm_hidden, 2, rng=rng)
        self.ser_mean = np.zeros(1)
        self.ser_std = np.ones(1)

    # SER scaling ---------------------------------------------------------

    def standardize(self, ser):
        return (np.asarray(ser, dtype=np.float64) - self.ser_mean[0]) / self.ser_std[0]

    def destandardize(self, z):
        return z * float(self.ser_std[0]) + float(self.ser_mean[0])

    # stages ---------------------------------------------------------------

    def encode_image(self, images: Tensor):
        """N x 3 x S x S -> (N x F features, N x C x h x w activations)."""
        if images.ndim != 4 or images.shape[1:] != (3, self.config.image_side, self.config.image_side):
            raise ValueError(f"expected N x 3 x {self.config.image_side} x {self.config.image_side}, got {images.shape}")
        return self.encoder(images)

    @staticmethod
    def fuse(features: Tensor, ser_z) -> Tensor:
        """Append the standardized SER as one extra feature column."""
        ser_z = ser_z if isinstance(ser_z, Tensor) else Tensor(np.asarray(ser_z, dtype=features.dtype).reshape(-1, 1))
        return F.concat([features, ser_z.reshape(-1, 1)], axis=1)

    def encode_sequence(self, steps: list[Tensor]):
        if not steps:
            raise ValueError("encode_sequence needs at least one step")
        batch = steps[0].shape[0]
        dtype = steps[0].dtype
        h = Tensor(np.zeros((batch, self.config.lstm_hidden), dtype=dtype))
        c = Tensor(np.zeros((batch, self.config.lstm_hidden), dtype=dtype))
        for x in steps:
            h, c = self.lstm(x, h, c)
        return h, c

    def decode_future(self, h: Tensor, c: Tensor, last_ser_z, m: int):
        """Autoregressive rollout; returns (list of m (B,1) predictions, final h)."""
        if m < 1:
            raise ValueError("m must be >= 1")
        batch = h.shape[0]
        prev = last_ser_z if isinstance(last_ser_z, Tensor) else Tensor(
            np.asarray(last_ser_z, dtype=h.dtype).reshape(batch, 1))
        blank = Tensor(np.zeros((batch, self.config.feature_size), dtype=h.dtype))
        preds = []
        for _ in range(m):
            h, c = self.lstm(F.concat([blank, prev], axis=1), h, c)
            out = self.reg_head(h)
            prev = prev + out if self.config.residual_head else out
            preds.append(prev)
        return preds, h

    def classify_risk(self, h: Tensor) -> Tensor:
        """(B, 2) probabilities: future myopia, future high myopia."""
        return F.sigmoid(self.cls_head(h))

    def forward(self, images: Tensor, input_sers) -> dict:
        """images: B x n x 3 x S x S; input_sers: B x n raw diopters."""
        b, n = images.shape[:2]
        if n != self.config.n:
            raise ValueError(f"model expects n={self.config.n} input years, got {n}")
        s = self.config.image_side
        feats, acts = self.encode_image(images.reshape(b * n, 3, s, s))
        feats = feats.reshape(b, n, self.config.feature_size)
        ser_z = self.standardize(input_sers).reshape(b, n)
        steps = [self.fuse(feats[:, t, :], ser_z[:, t]) for t in range(n)]
        h, c = self.encode_sequence(steps)
        preds, h_last = self.decode_future(h, c, ser_z[:, -1], self.config.m)
        pred_z = F.concat(preds, axis=1)
        return {
            "pred_z": pred_z,
            "pred": self.destandardize(pred_z.data),
            "probs": self.classify_risk(h_last),
            "activations": acts,
        }
