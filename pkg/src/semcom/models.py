"""Asymmetric semantic transceiver.

The base-station encoder is a residual CNN whose features are scaled by a
noise gate and a CSI-magnitude gate before a dense head emits one
(N_sf, N_st, 2) feature block per user. The UE decoder is lightweight: an
optional pilot-guided attention map, then separable-conv restoration and
classification heads. One encoder and one decoder are shared by all users.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import DiffTensor, ops
from .autodiff.cplx import CTensor
from .autodiff import cplx
from .channel import csi_magnitude
from .config import LinkConfig
from .grid import map_to_grid_t, pilot_reference
from .nn import Conv2D, Dense, Module, SepConv2D
from .precoder import NeuralPrecoder, zf_precode_t

IMAGE_SHAPE = (32, 32, 3)
N_CLASSES = 10
VARIANTS = ("full", "no_pilot", "rzf", "zf_in_loop")
GATE_INPUT_LIMIT = 5.0


def _dtype(module: Module):
    """Inputs follow the parameter precision (float32, or float64 during gradient checks)."""
    return next(iter(module.parameters().values())).dtype


# encoder ------------------------------------------------------------------------

class ResBlock(Module):
    """relu(conv-bn(relu(conv-bn(x))) + proj(x)); proj is a strided 1x1 conv when shapes change."""

    def __init__(self, rng, cin: int, cout: int, stride: int = 1):
        super().__init__()
        self.conv1 = Conv2D(rng, cin, cout, 3, stride, bn=True, act="relu")
        self.conv2 = Conv2D(rng, cout, cout, 3, 1, bn=True)
        self.proj = Conv2D(rng, cin, cout, 1, stride) if (stride != 1 or cin != cout) else None

    def __call__(self, x, train: bool = True) -> DiffTensor:
        y = self.conv2(self.conv1(x, train), train)
        skip = self.proj(x, train) if self.proj is not None else x
        return ops.relu(ops.add(y, skip))


def resblock(x, block: ResBlock, train: bool = True) -> DiffTensor:
    return block(x, train)


class NoiseAdaptation(Module):
    """Channel gate sigmoid(dense(normalized log10 noise variance))."""

    def __init__(self, rng, channels: int = 128, center: float = 0.0, half_width: float = 1.0,
                 zero_init: bool = False):
        super().__init__()
        if half_width <= 0:
            raise ValueError("half_width must be positive")
        self.center, self.half_width = float(center), float(half_width)
        self.dense = Dense(rng, 1, channels, act="sigmoid", zero_init=zero_init)

    def normalize(self, noise_var) -> np.ndarray:
        nv = np.asarray(noise_var, dtype=np.float64).reshape(-1)
        if np.any(nv <= 0):
            raise ValueError("noise variance must be positive")
        # clipped a few half-widths past the training range so the gate never saturates to 0 or 1
        z = np.clip((np.log10(nv) - self.center) / self.half_width, -GATE_INPUT_LIMIT, GATE_INPUT_LIMIT)
        return z.astype(_dtype(self))

    def gate(self, noise_var) -> DiffTensor:
        return self.dense(self.normalize(noise_var)[:, None])

    def __call__(self, features, noise_var) -> DiffTensor:
        g = self.gate(noise_var)
        return ops.mul(features, g.reshape((g.shape[0], 1, 1, g.shape[1])))


def noise_adaptation(features, noise_var, module: NoiseAdaptation) -> DiffTensor:
    return module(features, noise_var)


class ScenarioAdaptation(Module):
    """CSI-magnitude gate: two strided 1-D convs, average pool, dense pair."""

    def __init__(self, rng, channels: int = 128, zero_init: bool = False):
        super().__init__()
        self.conv1 = Conv2D(rng, 1, 16, (1, 5), 2, act="relu")
        self.conv2 = Conv2D(rng, 16, 32, (1, 5), 2, act="relu")
        self.hidden = Dense(rng, 32, 64, act="relu")
        self.out = Dense(rng, 64, channels, act="sigmoid", zero_init=zero_init)

    def gate(self, csi_mag) -> DiffTensor:
        csi_mag = np.asarray(csi_mag, dtype=_dtype(self))
        if csi_mag.ndim != 2:
            raise ValueError(f"csi magnitude must be [B, N_f], got {csi_mag.shape}")
        if np.any(csi_mag < 0):
            raise ValueError("csi magnitude must be nonnegative")
        x = csi_mag[:, None, :, None]                                    # [B, 1, N_f, 1]
        x = self.conv2(self.conv1(x))
        return self.out(self.hidden(ad.global_avg_pool(x)))

    def __call__(self, features, csi_mag) -> DiffTensor:
        g = self.gate(csi_mag)
        return ops.mul(features, g.reshape((g.shape[0], 1, 1, g.shape[1])))


def scenario_adaptation(csi_mag, module: ScenarioAdaptation) -> DiffTensor:
    return module.gate(csi_mag)


class Encoder(Module):
    def __init__(self, link: LinkConfig, rng=None, adaptive: bool = True,
                 noise_center: float = 0.0, noise_half_width: float = 1.0):
        super().__init__()
        rng = np.random.default_rng(rng)
        self.link = link
        self.adaptive = adaptive
        self.stem = Conv2D(rng, 3, 64, 3, 1, bn=True, act="relu")
        self.blocks = [ResBlock(rng, 64, 64, 2), ResBlock(rng, 64, 128, 2), ResBlock(rng, 128, 128, 1)]
        if adaptive:
            self.noise = NoiseAdaptation(rng, 128, noise_center, noise_half_width)
            self.scenario = ScenarioAdaptation(rng, 128)
        self.head_channels = max(1, link.n_sf * link.n_st // 64)
        self.head_conv = Conv2D(rng, 128, self.head_channels, 3, 1)
        self.head = Dense(rng, 64 * self.head_channels, link.n_sf * link.n_st * 2, act="tanh")

    def __call__(self, images, csi_mag, noise_var, train: bool = True) -> DiffTensor:
        """images [B, N_k, 32, 32, 3] -> features [B, N_sf, N_st, N_k, 2] in (-1, 1)."""
        images = np.asarray(images, dtype=_dtype(self))
        link = self.link
        if images.ndim != 5 or images.shape[1] != link.n_k or images.shape[2:] != IMAGE_SHAPE:
            raise ValueError(f"images must be [B, {link.n_k}, 32, 32, 3], got {images.shape}")
        b, k = images.shape[:2]
        x = self.stem(images.reshape((b * k,) + IMAGE_SHAPE), train)
        for block in self.blocks:
            x = block(x, train)
        if self.adaptive:
            # every user of a sample shares that sample's noise level and channel draw
            x = self.noise(x, np.repeat(np.asarray(noise_var, dtype=np.float64).reshape(-1), k))
            x = self.scenario(x, np.repeat(np.asarray(csi_mag), k, axis=0))
        x = self.head_conv(x, train)
        x = self.head(ops.reshape(x, (b * k, -1)))
        x = ops.reshape(x, (b, k, link.n_sf, link.n_st, 2))
        return ops.transpose(x, (0, 2, 3, 1, 4))


def encoder_forward(images, csi_mag, noise_var, encoder: Encoder, train: bool = True) -> DiffTensor:
    return encoder(images, csi_mag, noise_var, train)


# decoder ------------------------------------------------------------------------

class PilotAttention(Module):
    """Three separable convs over [Y re, Y im, Y_p re, Y_p im] ending in a sigmoid map."""

    def __init__(self, rng, hidden: int = 64):
        super().__init__()
        self.conv1 = SepConv2D(rng, 4, hidden, 3, bn=True, act="relu")
        self.conv2 = SepConv2D(rng, hidden, hidden, 3, bn=True, act="relu")
        self.out = SepConv2D(rng, hidden, 2, 3, act="sigmoid", zero_init=True)

    def __call__(self, y: DiffTensor, yp: np.ndarray, train: bool = True) -> DiffTensor:
        feats = ops.concat([y, yp], axis=-1)
        return self.out(self.conv2(self.conv1(feats, train), train), train)


def pilot_guided_attention(y: DiffTensor, yp: np.ndarray, module: PilotAttention,
                           data_symbols, train: bool = True) -> DiffTensor:
    """Y and Y_p as [N, N_f, N_t, 2] (re, im) -> [N, N_f, N_st, 4].

    The map weights Y elementwise; the pilot reference is concatenated back
    and the pilot symbols are dropped.
    """
    y = ad.as_tensor(y)
    yp = np.asarray(yp, dtype=y.dtype)
    if y.shape != yp.shape or y.ndim != 4 or y.shape[-1] != 2:
        raise ValueError(f"Y {y.shape} and Y_p {yp.shape} must both be [N, N_f, N_t, 2]")
    weight_map = module(y, yp, train)
    weighted = ops.mul(y, weight_map)
    return ops.take(ops.concat([weighted, yp], axis=-1), data_symbols, axis=2)


class Restoration(Module):
    def __init__(self, rng, cin: int):
        super().__init__()
        self.expand = Conv2D(rng, cin, 128, 1, act="relu")
        self.conv1 = SepConv2D(rng, 128, 64, 3, bn=True, act="relu")
        self.conv2 = SepConv2D(rng, 64, 32, 3, bn=True, act="relu")
        self.conv3 = SepConv2D(rng, 32, 16, 3)
        self.out = Conv2D(rng, 16, 3, 3, act="sigmoid")

    def __call__(self, x, train: bool = True) -> DiffTensor:
        x = ad.upsample_nearest(self.expand(x, train), 2)
        x = ad.upsample_nearest(self.conv1(x, train), 2)
        return self.out(self.conv3(self.conv2(x, train), train), train)


def restoration_forward(y_ca, module: Restoration, train: bool = True) -> DiffTensor:
    return module(y_ca, train)


class Classification(Module):
    def __init__(self, rng, cin: int, n_classes: int = N_CLASSES):
        super().__init__()
        self.convs = [SepConv2D(rng, cin, 16, 3, act="relu"),
                      SepConv2D(rng, 16, 32, 3, act="relu"),
                      SepConv2D(rng, 32, 64, 3, act="relu")]
        self.hidden = Dense(rng, 64, 128, act="relu")
        self.out = Dense(rng, 128, n_classes)

    def __call__(self, x, train: bool = True) -> DiffTensor:
        for conv in self.convs:
            x = ad.max_pool2d(conv(x, train), 2)
        x = ops.reshape(x, (x.shape[0], -1))
        return self.out(self.hidden(x))


def classification_forward(y_ca, module: Classification, train: bool = True) -> DiffTensor:
    return module(y_ca, train)


class Decoder(Module):
    """Per-user receiver; ``attention=False`` gives the blind (pilot-free) decoder."""

    def __init__(self, link: LinkConfig, rng=None, attention: bool = True, n_classes: int = N_CLASSES):
        super().__init__()
        rng = np.random.default_rng(rng)
        self.link = link
        self.attention = PilotAttention(rng) if attention else None
        per_re = 4 if attention else 2
        total = link.n_sf * link.n_st * per_re
        if total % 64:
            raise ValueError(f"N_sf*N_st*{per_re} = {total} does not fold onto an 8x8 grid")
        self.fold_channels = total // 64
        self.restoration = Restoration(rng, self.fold_channels)
        self.classification = Classification(rng, self.fold_channels, n_classes)
        yp = pilot_reference(link)                                            # [N_f, N_t, N_k]
        self._yp = np.stack([yp.real, yp.imag], axis=-1).transpose(2, 0, 1, 3).astype(np.float32)

    def features(self, y: CTensor, train: bool = True) -> DiffTensor:
        """Received grid [B, N_f, N_t, N_k] -> folded per-user input [B*N_k, 8, 8, C]."""
        link = self.link
        b = y.shape[0]
        if tuple(y.shape[1:]) != (link.n_f, link.n_t, link.n_k):
            raise ValueError(f"received grid must be [B, {link.n_f}, {link.n_t}, {link.n_k}], got {y.shape}")
        per_user = ops.transpose(ops.stack([y.re, y.im], axis=-1), (0, 3, 1, 2, 4))
        per_user = ops.reshape(per_user, (b * link.n_k, link.n_f, link.n_t, 2))
        if self.attention is not None:
            yp = np.tile(self._yp.astype(y.re.dtype), (b, 1, 1, 1))
            x = pilot_guided_attention(per_user, yp, self.attention, link.data_symbols, train)
        else:
            x = ops.take(per_user, link.data_symbols, axis=2)
        return ops.reshape(x, (b * link.n_k, 8, 8, self.fold_channels))

    def __call__(self, y: CTensor, train: bool = True):
        """Returns (images [B, N_k, 32, 32, 3], logits [B, N_k, classes])."""
        b, k = y.shape[0], self.link.n_k
        x = self.features(y, train)
        recon = self.restoration(x, train)
        logits = self.classification(x, train)
        return (ops.reshape(recon, (b, k) + IMAGE_SHAPE),
                ops.reshape(logits, (b, k, logits.shape[-1])))


# loss -------------------------------------------------------------------------------

def reconstruction_error(recon, images) -> DiffTensor:
    """Mean squared error over every pixel of the batch."""
    recon = ad.as_tensor(recon)
    return ops.mse(recon, np.asarray(images, dtype=recon.dtype))


def composite_loss(recon, images, logits, labels, lam: float = 0.1,
                   recon_scale: float = 1.0) -> DiffTensor:
    """recon_scale * MSE + lam * softmax cross-entropy, both batch means.

    ``recon_scale`` weighs pixel error against the classification term;
    3072 (pixels per image) turns the MSE into a per-image squared error.
    """
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    if recon_scale <= 0:
        raise ValueError("recon_scale must be positive")
    logits = ad.as_tensor(logits)
    loss = reconstruction_error(recon, images)
    if recon_scale != 1.0:
        loss = ops.mul(loss, float(recon_scale))
    if lam == 0:
        # keep the classification head in the graph so it receives exact zero gradients
        return ops.add(loss, ops.mul(ops.sum(logits), 0.0))
    n_classes = logits.shape[-1]
    ce = ops.cross_entropy(ops.reshape(logits, (-1, n_classes)), np.asarray(labels).reshape(-1))
    return ops.add(loss, ops.mul(ce, lam))


# end-to-end system ----------------------------------------------------------------------

def apply_channel_t(h: np.ndarray, x: CTensor, noise: np.ndarray | None = None) -> CTensor:
    """y = H x (+ noise) with constant H [..., N_k, N_m] and x [..., N_m]."""
    dtype = x.re.dtype
    hc = CTensor(ad.DiffTensor(np.ascontiguousarray(h.real, dtype=dtype)),
                 ad.DiffTensor(np.ascontiguousarray(h.imag, dtype=dtype)))
    xc = cplx.reshape(x, x.shape + (1,))
    y = cplx.matmul(hc, xc)
    y = cplx.reshape(y, y.shape[:-1])
    if noise is not None:
        y = CTensor(ops.add(y.re, np.asarray(noise.real, dtype=dtype)),
                    ops.add(y.im, np.asarray(noise.imag, dtype=dtype)))
    return y


class SemanticSystem(Module):
    """Encoder, precoder and decoder for one ablation variant.

    ``full``: neural residual precoder and pilot-guided attention.
    ``no_pilot``: neural residual precoder, blind decoder.
    ``rzf``: fixed RZF (alpha = 1) precoder, blind decoder.
    ``zf_in_loop``: zero forcing inside the graph plus the full decoder.
    """

    def __init__(self, link: LinkConfig | None = None, variant: str = "full", seed: int = 0,
                 snr_range_db=(-7.0, 7.0)):
        super().__init__()
        if variant not in VARIANTS:
            raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
        link = link or LinkConfig()
        self.link, self.variant = link, variant
        rng = np.random.default_rng(seed)
        lo, hi = snr_range_db
        es = link.power / link.n_m
        self.encoder = Encoder(link, rng, adaptive=True,
                               noise_center=np.log10(es) - (lo + hi) / 20.0,
                               noise_half_width=max((hi - lo) / 20.0, 0.1))
        if variant in ("full", "no_pilot"):
            self.precoder = NeuralPrecoder(link.n_k, link.n_m, rng)
        elif variant == "rzf":
            self.precoder = NeuralPrecoder(link.n_k, link.n_m, rng, residual=False, learn_alpha=False)
        else:
            self.precoder = None
        self.decoder = Decoder(link, rng, attention=variant in ("full", "zf_in_loop"))

    def transmit(self, images, h, noise_var, train: bool = True) -> CTensor:
        """Precoded, power-normalized antenna grid [B, N_f, N_t, N_m]."""
        feats = self.encoder(images, csi_magnitude(h), noise_var, train)
        s = map_to_grid_t(feats, self.link)
        if self.precoder is None:
            return zf_precode_t(s, h, self.link.power)
        return self.precoder(s, h, noise_var, self.link.power, train)

    def __call__(self, images, h, noise_var, noise=None, train: bool = True):
        x = self.transmit(images, h, noise_var, train)
        y = apply_channel_t(h, x, noise)
        recon, logits = self.decoder(y, train)
        return recon, logits, x

    def encoder_parameters(self) -> dict:
        return self.encoder.parameters("encoder.")

    def decoder_parameters(self) -> dict:
        return self.decoder.parameters("decoder.")


__all__ = [
    "Classification", "Decoder", "Encoder", "IMAGE_SHAPE", "N_CLASSES", "NoiseAdaptation",
    "PilotAttention", "ResBlock", "Restoration", "ScenarioAdaptation", "SemanticSystem", "VARIANTS",
    "apply_channel_t", "classification_forward", "composite_loss", "encoder_forward",
    "noise_adaptation", "pilot_guided_attention", "reconstruction_error", "resblock", "restoration_forward",
    "scenario_adaptation",
]
