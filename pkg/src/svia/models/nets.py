"""Small torch architectures used as desk-scale stand-ins.

All nets avoid BatchNorm (GroupNorm only) so inference carries no running
statistics and training is deterministic under fixed seeds.
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F


def _gn(ch: int) -> nn.GroupNorm:
    return nn.GroupNorm(num_groups=min(4, ch), num_channels=ch)


class ConvBlock(nn.Module):
    def __init__(self, c_in: int, c_out: int, stride: int = 1):
        super().__init__()
        self.conv = nn.Conv2d(c_in, c_out, 3, stride=stride, padding=1)
        self.norm = _gn(c_out)

    def forward(self, x):
        return F.silu(self.norm(self.conv(x)))


class SegmenterNet(nn.Module):
    """Encoder-decoder with skip connections; per-pixel category logits."""

    def __init__(self, n_categories: int, base: int = 16):
        super().__init__()
        self.n_categories = n_categories
        self.base = base
        self.enc1 = ConvBlock(3, base)
        self.enc2 = ConvBlock(base, base * 2, stride=2)
        self.enc3 = ConvBlock(base * 2, base * 4, stride=2)
        self.dec2 = ConvBlock(base * 4 + base * 2, base * 2)
        self.dec1 = ConvBlock(base * 2 + base, base)
        self.head = nn.Conv2d(base, n_categories, 1)

    def forward(self, x):
        a1 = self.enc1(x)
        a2 = self.enc2(a1)
        a3 = self.enc3(a2)
        u2 = F.interpolate(a3, scale_factor=2, mode="nearest")
        d2 = self.dec2(torch.cat([u2, a2], dim=1))
        u1 = F.interpolate(d2, scale_factor=2, mode="nearest")
        d1 = self.dec1(torch.cat([u1, a1], dim=1))
        return self.head(d1)


class DenoiserNet(nn.Module):
    """Conditional noise predictor.

    Spatial input is the concatenation of the noisy latent, the mask, the
    context image, and a learned projection of the text embedding broadcast
    over space; the step embedding enters additively at the bottleneck.
    """

    def __init__(self, latent_channels: int = 3, base: int = 16, text_dim: int = 16, step_dim: int = 32, text_channels: int = 4):
        super().__init__()
        self.latent_channels = latent_channels
        self.base = base
        self.text_dim = text_dim
        self.step_dim = step_dim
        in_ch = 2 * latent_channels + 1 + text_channels
        self.text_proj = nn.Linear(text_dim, text_channels)
        self.step_proj = nn.Sequential(nn.Linear(step_dim, base * 4), nn.SiLU(), nn.Linear(base * 4, base * 4))
        self.enc1 = ConvBlock(in_ch, base)
        self.enc2 = ConvBlock(base, base * 2, stride=2)
        self.enc3 = ConvBlock(base * 2, base * 4, stride=2)
        self.mid = ConvBlock(base * 4, base * 4)
        self.dec2 = ConvBlock(base * 4 + base * 2, base * 2)
        self.dec1 = ConvBlock(base * 2 + base, base)
        self.head = nn.Conv2d(base, latent_channels, 1)

    def forward(self, y, mask, context, e_t, e_s):
        t_ch = self.text_proj(e_t)
        t_map = t_ch[:, :, None, None].expand(-1, -1, y.shape[2], y.shape[3])
        x = torch.cat([y, mask, context, t_map], dim=1)
        a1 = self.enc1(x)
        a2 = self.enc2(a1)
        a3 = self.enc3(a2)
        s = self.step_proj(e_s)
        a3 = a3 + s[:, :, None, None]
        m = self.mid(a3)
        u2 = F.interpolate(m, scale_factor=2, mode="nearest")
        d2 = self.dec2(torch.cat([u2, a2], dim=1))
        u1 = F.interpolate(d2, scale_factor=2, mode="nearest")
        d1 = self.dec1(torch.cat([u1, a1], dim=1))
        return self.head(d1)


class ClassifierNet(nn.Module):
    """Three stride-2 conv stages, global average pool, linear head.

    Also serves as the feature extractor backbone: stages() exposes the
    per-stage activation maps, features() the pooled last stage.
    """

    def __init__(self, n_classes: int, base: int = 16):
        super().__init__()
        self.n_classes = n_classes
        self.base = base
        self.stage1 = ConvBlock(3, base, stride=2)
        self.stage2 = ConvBlock(base, base * 2, stride=2)
        self.stage3 = ConvBlock(base * 2, base * 4, stride=2)
        self.fc = nn.Linear(base * 4, n_classes)

    def stages(self, x):
        a1 = self.stage1(x)
        a2 = self.stage2(a1)
        a3 = self.stage3(a2)
        return [a1, a2, a3]

    def features(self, x):
        return self.stages(x)[-1].mean(dim=(2, 3))

    def forward(self, x):
        return self.fc(self.features(x))


class CodecNet(nn.Module):
    """Convolutional autoencoder with a fixed x4 spatial downsampling."""

    downsample_factor = 4

    def __init__(self, latent_channels: int = 12, base: int = 24):
        super().__init__()
        self.latent_channels = latent_channels
        self.base = base
        self.enc = nn.Sequential(ConvBlock(3, base, stride=2), ConvBlock(base, base, stride=1), nn.Conv2d(base, latent_channels, 3, stride=2, padding=1))
        self.dec = nn.Sequential(ConvBlock(latent_channels, base), ConvBlock(base, base))
        self.out = nn.Conv2d(base, 3, 1)

    def encode(self, x):
        return self.enc(x)

    def decode(self, z):
        h = F.interpolate(z, scale_factor=2, mode="nearest")
        h = self.dec[0](h)
        h = F.interpolate(h, scale_factor=2, mode="nearest")
        h = self.dec[1](h)
        return torch.sigmoid(self.out(h))

    def forward(self, x):
        return self.decode(self.encode(x))


class EmbedderNet(nn.Module):
    """Random convolutional projection of a 32x32 crop.

    Purely linear and bias-free on mean-centered input, so embeddings of
    independent crops are near-orthogonal, a constant crop maps to the zero
    vector, and cosine similarity measures genuine content overlap.
    """

    def __init__(self, out_dim: int = 64, base: int = 16):
        super().__init__()
        self.out_dim = out_dim
        self.conv1 = nn.Conv2d(3, base, 3, stride=2, padding=1, bias=False)
        self.conv2 = nn.Conv2d(base, base * 2, 3, stride=2, padding=1, bias=False)
        self.proj = nn.Linear(base * 2 * 8 * 8, out_dim, bias=False)

    def forward(self, x):
        h = self.conv2(self.conv1(x - 0.5))
        return self.proj(h.flatten(start_dim=1))
