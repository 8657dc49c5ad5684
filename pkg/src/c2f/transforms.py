"""The codec network.

Main analysis/synthesis transforms (stride-2 convs with GDN / iGDN),
two signal-preserving hyper transform levels (3x3 linear expansion,
space-to-depth, 1x1 conv stack), mean/scale predictor heads, the linear
information-fidelity projector, and the information-aggregation
reconstruction decoder that fuses the main latent with both hyper-level
side representations at half resolution.

Latent shape ladder for a padded (b, 64m, 64n, 3) input:
    X (b, 4m, 4n, n_main)   spatial /16
    Y (b, 2m, 2n, c_y)      spatial /32
    Z (b,  m,  n, c_z)      spatial /64
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import GdnParams, Tensor
from .entropy import SIGMA_MAX, SIGMA_MIN, FactorizedZ
from .errors import ContractViolation

DOWNSAMPLE = 64  # 16 (main) * 2 (hyper level 1) * 2 (hyper level 2)


@dataclass(frozen=True)
class ArchConfig:
    """Channel widths; spatial structure is fixed by the shape ladder."""

    n_main: int = 128
    c_y: int = 0    # 0 means "same as n_main"
    c_z: int = 0    # 0 means "n_main // 2"
    main_depth: int = 4

    def __post_init__(self):
        if self.c_y == 0:
            object.__setattr__(self, "c_y", self.n_main)
        if self.c_z == 0:
            object.__setattr__(self, "c_z", max(self.n_main // 2, 1))
        if min(self.n_main, self.c_y, self.c_z) < 1:
            raise ContractViolation("channel counts must be >= 1")
        if self.main_depth != 4:
            raise ContractViolation("main transform is fixed at 4 stride-2 stages")

    @property
    def downsample(self) -> int:
        return DOWNSAMPLE


@dataclass
class LatentTriple:
    """Quantized latent planes plus their predicted Gaussian parameters."""

    x: Tensor
    y: Tensor
    z: Tensor
    mu_x: Tensor
    sigma_x: Tensor
    mu_y: Tensor
    sigma_y: Tensor
    sigma_z: np.ndarray  # per-channel vector


# ---------------------------------------------------------------------------
# layers

def _kernel_init(rng: np.random.Generator, kh: int, kw: int, cin_eff: float,
                 shape: tuple[int, ...]) -> np.ndarray:
    std = float(np.sqrt(1.0 / (kh * kw * cin_eff)))
    return rng.normal(0.0, std, size=shape).astype(np.float32)


def _smooth_upsample_init(rng: np.random.Generator, k: int, out_ch: int,
                          in_ch: int) -> np.ndarray:
    """Deconv kernel that starts as a channelwise smooth 2x upsampler.

    The composed decoder then begins life as "upsample the latents", so
    only the final color mapping has to be learned from scratch; this
    cuts hundreds of steps off desk-scale training runs.
    """
    taps = np.array([0.125, 0.5, 0.75, 0.5, 0.125], dtype=np.float64)[:k]
    w = np.outer(taps, taps)
    kern = rng.normal(0.0, 0.01, (k, k, out_ch, in_ch)).astype(np.float32)
    for c in range(min(out_ch, in_ch)):
        kern[:, :, c, c] += w.astype(np.float32)
    return kern


class ConvLayer:
    kind = "conv"

    def __init__(self, rng, in_ch: int, out_ch: int, kernel: int, stride: int,
                 activation: str, bias: bool = True,
                 gdn_init: tuple[float, float] = (1.0, 0.1)):
        self.in_ch, self.out_ch = in_ch, out_ch
        self.kernel_size, self.stride = kernel, stride
        self.activation = activation
        self.kernel = Tensor(_kernel_init(rng, kernel, kernel, in_ch,
                                          (kernel, kernel, in_ch, out_ch)), True)
        self.bias = Tensor(np.zeros((1, 1, 1, out_ch), np.float32), True) if bias else None
        self.gdn = (GdnParams.create(out_ch, *gdn_init)
                    if activation in ("gdn", "igdn") else None)

    def __call__(self, x: Tensor) -> Tensor:
        out = ad.conv2d(x, self.kernel, self.stride, "same")
        if self.bias is not None:
            out = ad.add(out, self.bias)
        return _activate(out, self.activation, self.gdn)

    def params(self, prefix: str):
        yield from _layer_params(self, prefix)

    def describe(self) -> dict:
        return _describe(self)


class DeconvLayer:
    kind = "deconv"

    def __init__(self, rng, in_ch: int, out_ch: int, kernel: int, stride: int,
                 activation: str, bias: bool = True,
                 gdn_init: tuple[float, float] = (1.0, 0.1)):
        self.in_ch, self.out_ch = in_ch, out_ch
        self.kernel_size, self.stride = kernel, stride
        self.activation = activation
        # laid out (kh, kw, out, in): the adjoint-convention kernel
        self.kernel = Tensor(_kernel_init(rng, kernel, kernel, in_ch / stride ** 2,
                                          (kernel, kernel, out_ch, in_ch)), True)
        self.bias = Tensor(np.zeros((1, 1, 1, out_ch), np.float32), True) if bias else None
        self.gdn = (GdnParams.create(out_ch, *gdn_init)
                    if activation in ("gdn", "igdn") else None)

    def __call__(self, x: Tensor) -> Tensor:
        out = ad.deconv2d(x, self.kernel, self.stride, "same")
        if self.bias is not None:
            out = ad.add(out, self.bias)
        return _activate(out, self.activation, self.gdn)

    def params(self, prefix: str):
        yield from _layer_params(self, prefix)

    def describe(self) -> dict:
        return _describe(self)


class SpaceToDepthLayer:
    kind = "space_to_depth"

    def __init__(self, in_ch: int):
        self.in_ch, self.out_ch = in_ch, 4 * in_ch
        self.kernel_size, self.stride, self.activation = None, None, None

    def __call__(self, x: Tensor) -> Tensor:
        return ad.space_to_depth(x)

    def params(self, prefix: str):
        return iter(())

    def describe(self) -> dict:
        return _describe(self)


class DepthToSpaceLayer:
    kind = "depth_to_space"

    def __init__(self, in_ch: int):
        self.in_ch, self.out_ch = in_ch, in_ch // 4
        self.kernel_size, self.stride, self.activation = None, None, None

    def __call__(self, x: Tensor) -> Tensor:
        return ad.depth_to_space(x)

    def params(self, prefix: str):
        return iter(())

    def describe(self) -> dict:
        return _describe(self)


def _activate(out: Tensor, activation: str, gdn_params) -> Tensor:
    if activation == "linear":
        return out
    if activation == "relu":
        return ad.relu(out)
    if activation == "gdn":
        return ad.gdn(out, gdn_params)
    if activation == "igdn":
        return ad.gdn(out, gdn_params, inverse=True)
    raise ContractViolation(f"unknown activation {activation!r}")


def _layer_params(layer, prefix: str):
    yield f"{prefix}.kernel", layer.kernel
    if layer.bias is not None:
        yield f"{prefix}.bias", layer.bias
    if layer.gdn is not None:
        yield f"{prefix}.gdn.beta_u", layer.gdn.beta_u
        yield f"{prefix}.gdn.gamma_v", layer.gdn.gamma_v


def _describe(layer) -> dict:
    return {"kind": layer.kind, "kernel": layer.kernel_size,
            "stride": layer.stride, "in_ch": layer.in_ch,
            "out_ch": layer.out_ch, "activation": layer.activation}


class Sequential:
    def __init__(self, layers: list):
        self.layers = layers

    def __call__(self, x: Tensor) -> Tensor:
        for layer in self.layers:
            x = layer(x)
        return x

    def params(self, prefix: str):
        for i, layer in enumerate(self.layers):
            yield from layer.params(f"{prefix}.{i}")

    def describe(self) -> list[dict]:
        return [layer.describe() for layer in self.layers]


def _hyper_analysis(rng, c: int, c_prime: int) -> Sequential:
    """Signal-preserving hyper analysis: 3x3 linear expansion to 2c,
    space-to-depth, two 1x1 ReLU stages at 4c, 1x1 linear to c'."""
    return Sequential([
        ConvLayer(rng, c, 2 * c, 3, 1, "linear"),
        SpaceToDepthLayer(2 * c),
        ConvLayer(rng, 8 * c, 4 * c, 1, 1, "relu"),
        ConvLayer(rng, 4 * c, 4 * c, 1, 1, "relu"),
        ConvLayer(rng, 4 * c, c_prime, 1, 1, "linear"),
    ])


def _hyper_synthesis(rng, c: int, c_prime: int) -> Sequential:
    """Mirror of the hyper analysis: 1x1 linear to 4c, depth-to-space,
    two 1x1 ReLU stages at 4c, 3x3 linear back to c."""
    return Sequential([
        DeconvLayer(rng, c_prime, 4 * c, 1, 1, "linear"),
        DepthToSpaceLayer(4 * c),
        DeconvLayer(rng, c, 4 * c, 1, 1, "relu"),
        DeconvLayer(rng, 4 * c, 4 * c, 1, 1, "relu"),
        DeconvLayer(rng, 4 * c, c, 3, 1, "linear"),
    ])


class PredictorHead:
    """Two 1x1 convs with a ReLU between; output splits into mu and raw
    scale, with sigma = clamp(exp(raw), SIGMA_MIN, SIGMA_MAX).

    The raw-scale bias starts at log(sigma_init) so the predicted scales
    begin near the actual latent magnitudes instead of deep inside the
    likelihood floor."""

    def __init__(self, rng, channels: int, sigma_init: float = 1.0):
        self.channels = channels
        self.net = Sequential([
            ConvLayer(rng, channels, 2 * channels, 1, 1, "relu"),
            ConvLayer(rng, 2 * channels, 2 * channels, 1, 1, "linear"),
        ])
        # damp the output layer so exp(raw) starts concentrated near
        # sigma_init instead of slamming into the clamp bounds
        self.net.layers[-1].kernel.data *= 0.05
        self.net.layers[-1].bias.data[..., channels:] = float(np.log(sigma_init))

    def __call__(self, side: Tensor) -> tuple[Tensor, Tensor]:
        out = self.net(side)
        mu = ad.channel_slice(out, 0, self.channels)
        raw = ad.channel_slice(out, self.channels, 2 * self.channels)
        sigma = ad.clamp(ad.exp(raw), SIGMA_MIN, SIGMA_MAX)
        return mu, sigma

    def params(self, prefix: str):
        yield from self.net.params(f"{prefix}.net")


class CodecModel:
    """All trainable parameters plus the architecture hyperparameters."""

    def __init__(self, arch: ArchConfig, lambda_tag: int = 0,
                 distortion: str = "mse", seed: int = 0):
        if distortion not in ("mse", "msssim"):
            raise ContractViolation(f"unknown distortion kind {distortion!r}")
        self.arch = arch
        self.lambda_tag = int(lambda_tag)
        self.distortion = distortion
        rng = np.random.default_rng(seed)
        n, c_y, c_z = arch.n_main, arch.c_y, arch.c_z

        # the last analysis GDN starts as a pure x10 gain (beta = 0.01,
        # gamma = 0): each latent plane must start well above the unit
        # quantization bin or the +-0.5 noise drowns the signal and
        # desk-scale runs collapse to ignoring the latents entirely
        self.analysis_t = Sequential(
            [ConvLayer(rng, 3, n, 5, 2, "gdn", gdn_init=(1.0, 0.01))]
            + [ConvLayer(rng, n, n, 5, 2, "gdn", gdn_init=(1.0, 0.01))
               for _ in range(arch.main_depth - 2)]
            + [ConvLayer(rng, n, n, 5, 2, "gdn", gdn_init=(0.01, 0.0))])

        self.hyper_analysis_1 = _hyper_analysis(rng, n, c_y)
        self.hyper_analysis_2 = _hyper_analysis(rng, c_y, c_z)
        # hyper output layers are linear, so a plain kernel gain is safe
        self.hyper_analysis_1.layers[-1].kernel.data *= 8.0
        self.hyper_analysis_2.layers[-1].kernel.data *= 8.0
        self.hyper_synthesis_1 = _hyper_synthesis(rng, n, c_y)
        self.hyper_synthesis_2 = _hyper_synthesis(rng, c_y, c_z)

        # scales start near the observed init magnitudes of each plane
        self.predictor_x = PredictorHead(rng, n, sigma_init=4.0)
        self.predictor_y = PredictorHead(rng, c_y, sigma_init=8.0)
        self.fz = FactorizedZ.create(c_z, sigma_init=16.0)

        # one linear layer mapping Y's grid onto X's grid (2x up, no bias)
        self.info_proj = DeconvLayer(rng, c_y, n, 2, 2, "linear", bias=False)

        # information-aggregation decoder: main path 3 stages to h/2,
        # side paths 3 (L1, from /16) and 4 (L2, from /32) stages to h/2
        cs = max(n // 2, 4)
        # synthesis iGDNs start near-linear; gamma = 0.1 would amplify the
        # large decoded latents and swamp the first training steps
        self.synthesis_main = Sequential(
            [DeconvLayer(rng, n, n, 5, 2, "igdn", gdn_init=(1.0, 1e-4))
             for _ in range(3)])
        for layer in self.synthesis_main.layers:
            layer.kernel.data = _smooth_upsample_init(rng, 5, n, n)
        self.side1_up = Sequential(
            [DeconvLayer(rng, n, cs, 3, 2, "relu")]
            + [DeconvLayer(rng, cs, cs, 3, 2, "relu") for _ in range(2)])
        self.side2_up = Sequential(
            [DeconvLayer(rng, c_y, cs, 3, 2, "relu")]
            + [DeconvLayer(rng, cs, cs, 3, 2, "relu") for _ in range(3)])
        # peripheral convs stay linear so the smooth main path is not
        # ReLU-gated at init; the residual tail starts damped
        self.fuse_in = ConvLayer(rng, n + 2 * cs, n, 3, 1, "linear")
        self.res_a = ConvLayer(rng, n, n, 3, 1, "relu")
        self.res_b = ConvLayer(rng, n, n, 3, 1, "linear")
        self.res_b.kernel.data *= 0.1
        self.fuse_out = ConvLayer(rng, n, n, 3, 1, "linear")
        for c in range(n):
            self.fuse_in.kernel.data[1, 1, c, c] += 1.0
            self.fuse_out.kernel.data[1, 1, c, c] += 1.0
        self.final_up = DeconvLayer(rng, n, 3, 5, 2, "linear")
        self.final_up.bias.data[:] = 0.5  # start at mid-gray

    # -- forward pieces -----------------------------------------------------

    def analysis(self, image: Tensor) -> Tensor:
        b, h, w, c = image.shape
        if c != 3:
            raise ContractViolation(f"analysis expects 3 channels, got {c}")
        if h % DOWNSAMPLE or w % DOWNSAMPLE:
            raise ContractViolation(
                f"input must be padded to multiples of {DOWNSAMPLE}, got {h}x{w}")
        return self.analysis_t(image)

    def hyper_analysis(self, level_input: Tensor, level: int) -> Tensor:
        net, want = {1: (self.hyper_analysis_1, self.arch.n_main),
                     2: (self.hyper_analysis_2, self.arch.c_y)}[level]
        if level_input.shape[3] != want:
            raise ContractViolation(
                f"hyper analysis level {level} expects {want} channels, "
                f"got {level_input.shape[3]}")
        return net(level_input)

    def hyper_synthesis(self, code: Tensor, level: int) -> Tensor:
        net, want = {1: (self.hyper_synthesis_1, self.arch.c_y),
                     2: (self.hyper_synthesis_2, self.arch.c_z)}[level]
        if code.shape[3] != want:
            raise ContractViolation(
                f"hyper synthesis level {level} expects {want} channels, "
                f"got {code.shape[3]}")
        return net(code)

    def predict_params(self, side_repr: Tensor, level: str) -> tuple[Tensor, Tensor]:
        head = {"x": self.predictor_x, "y": self.predictor_y}[level]
        if side_repr.shape[3] != head.channels:
            raise ContractViolation(
                f"predictor {level} expects {head.channels} channels, "
                f"got {side_repr.shape[3]}")
        return head(side_repr)

    def info_fidelity_project(self, y: Tensor) -> Tensor:
        return self.info_proj(y)

    def synthesize(self, xhat: Tensor, side1: Tensor, side2: Tensor) -> Tensor:
        """Reconstruct the image; output is unclipped (clip at inference)."""
        main = self.synthesis_main(xhat)
        s1 = self.side1_up(side1)
        s2 = self.side2_up(side2)
        if not (main.shape[:3] == s1.shape[:3] == s2.shape[:3]):
            raise ContractViolation(
                f"aggregation grids disagree: {main.shape} {s1.shape} {s2.shape}")
        fused = self.fuse_in(ad.concat_channels([main, s1, s2]))
        res = ad.add(fused, self.res_b(self.res_a(fused)))
        return self.final_up(self.fuse_out(res))

    # -- parameter access ---------------------------------------------------

    def named_params(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for prefix, part in [
            ("analysis", self.analysis_t),
            ("hyper_analysis_1", self.hyper_analysis_1),
            ("hyper_analysis_2", self.hyper_analysis_2),
            ("hyper_synthesis_1", self.hyper_synthesis_1),
            ("hyper_synthesis_2", self.hyper_synthesis_2),
            ("predictor_x", self.predictor_x),
            ("predictor_y", self.predictor_y),
            ("synthesis_main", self.synthesis_main),
            ("side1_up", self.side1_up),
            ("side2_up", self.side2_up),
        ]:
            for name, tensor in part.params(prefix):
                out[name] = tensor
        for name, layer in [("fuse_in", self.fuse_in), ("res_a", self.res_a),
                            ("res_b", self.res_b), ("fuse_out", self.fuse_out),
                            ("final_up", self.final_up), ("info_proj", self.info_proj)]:
            for pname, tensor in layer.params(name):
                out[pname] = tensor
        out["fz.log_sigma"] = self.fz.log_sigma
        return out

    def param_list(self) -> list[Tensor]:
        return [t for _, t in sorted(self.named_params().items())]

    def latent_shapes(self, pad_h: int, pad_w: int, batch: int = 1):
        """Shapes of (X, Y, Z) for a padded input of the given size."""
        a = self.arch
        return ((batch, pad_h // 16, pad_w // 16, a.n_main),
                (batch, pad_h // 32, pad_w // 32, a.c_y),
                (batch, pad_h // 64, pad_w // 64, a.c_z))
