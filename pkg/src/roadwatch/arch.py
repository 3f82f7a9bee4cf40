"""Declarative CNN architecture descriptors with shape inference and scaling.

Layer lists describe a network at the granularity needed to derive per-layer
output sizes and (for primitive layers) trainable parameter counts; no
network is ever executed. Composite blocks (residual bodies, inverted
bottlenecks) are modelled only down to their declared stride and output
channels, so internal filter bookkeeping inside them is out of scope for
parameter counting.

Spatial rules per axis: valid padding gives floor((n - k) / s) + 1, same
padding gives ceil(n / s).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Literal, Sequence

Padding = Literal["same", "valid"]


class ShapeInferenceError(ValueError):
    """A layer cannot be applied to its input shape."""


class UnsupportedLayerError(ValueError):
    """The requested computation is not modelled for this layer kind."""


@dataclass(frozen=True)
class LayerSpec:
    """One layer (or composite block) in an architecture descriptor."""

    kind: str
    kernel: tuple[int, int] | None = None
    stride: tuple[int, int] = (1, 1)
    padding: Padding = "same"
    filters: int | None = None
    units: int | None = None
    rate: float | None = None
    arms: tuple[tuple["LayerSpec", ...], ...] = ()
    body: tuple["LayerSpec", ...] = ()
    times: int = 1
    name: str = ""

    def __post_init__(self) -> None:
        if self.kernel is not None and min(self.kernel) < 1:
            raise ValueError(f"kernel must be >= 1, got {self.kernel}")
        if min(self.stride) < 1:
            raise ValueError(f"stride must be >= 1, got {self.stride}")


def _pair(v: int | tuple[int, int]) -> tuple[int, int]:
    return (v, v) if isinstance(v, int) else v


def conv(kernel, filters, stride=1, padding: Padding = "same", name="") -> LayerSpec:
    return LayerSpec("conv", _pair(kernel), _pair(stride), padding, filters=filters, name=name)


def separable_conv(kernel, filters, stride=1, padding: Padding = "same", name="") -> LayerSpec:
    return LayerSpec("separable_conv", _pair(kernel), _pair(stride), padding, filters=filters, name=name)


def maxpool(kernel, stride, padding: Padding = "valid", name="") -> LayerSpec:
    return LayerSpec("maxpool", _pair(kernel), _pair(stride), padding, name=name)


def avgpool_global(name="") -> LayerSpec:
    return LayerSpec("avgpool_global", name=name)


def dense(units, name="") -> LayerSpec:
    return LayerSpec("dense", units=units, name=name)


def dropout(rate, name="") -> LayerSpec:
    return LayerSpec("dropout", rate=rate, name=name)


def flatten(name="") -> LayerSpec:
    return LayerSpec("flatten", name=name)


def branch_concat(*arms: Sequence[LayerSpec], name="") -> LayerSpec:
    return LayerSpec("branch_concat", arms=tuple(tuple(a) for a in arms), name=name)


def repeat(times: int, body: Sequence[LayerSpec], name="") -> LayerSpec:
    return LayerSpec("repeat", body=tuple(body), times=times, name=name)


def residual(body: Sequence[LayerSpec], name="") -> LayerSpec:
    """A shape-preserving residual block: output dims equal input dims."""
    return LayerSpec("residual", body=tuple(body), name=name)


def mbconv(kernel, filters, stride=1, name="") -> LayerSpec:
    """Inverted-bottleneck composite: same-padding spatial rule, declared output channels."""
    return LayerSpec("mbconv", _pair(kernel), _pair(stride), "same", filters=filters, name=name)


@dataclass(frozen=True)
class ArchitectureSpec:
    """A named network: input dims (height, width, channels) plus a layer list."""

    name: str
    input_dims: tuple[int, int, int]
    layers: tuple[LayerSpec, ...]

    def __post_init__(self) -> None:
        h, w, c = self.input_dims
        if min(h, w, c) < 1:
            raise ValueError(f"input dims must be positive, got {self.input_dims}")


Dims = tuple[int, int, int]  # (h, w, c); spatially collapsed layers use h = w = 1


def _axis_out(n: int, k: int, s: int, padding: Padding, label: str) -> int:
    if padding == "valid":
        if k > n:
            raise ShapeInferenceError(f"{label}: valid-padding kernel {k} exceeds input extent {n}")
        return (n - k) // s + 1
    return math.ceil(n / s)


def _apply(layer: LayerSpec, dims: Dims, label: str) -> Dims:
    h, w, c = dims
    kind = layer.kind
    if kind in ("conv", "separable_conv", "maxpool", "mbconv"):
        kh, kw = layer.kernel if layer.kernel else (1, 1)
        sh, sw = layer.stride
        if kind == "mbconv":
            oh, ow = math.ceil(h / sh), math.ceil(w / sw)
        else:
            oh = _axis_out(h, kh, sh, layer.padding, label)
            ow = _axis_out(w, kw, sw, layer.padding, label)
        oc = c if kind == "maxpool" else layer.filters
        if oc is None:
            raise ShapeInferenceError(f"{label}: missing filter count")
        return (oh, ow, oc)
    if kind == "avgpool_global":
        return (1, 1, c)
    if kind == "flatten":
        return (1, 1, h * w * c)
    if kind == "dense":
        if layer.units is None:
            raise ShapeInferenceError(f"{label}: dense layer missing units")
        return (1, 1, layer.units)
    if kind == "dropout":
        return dims
    if kind == "branch_concat":
        if not layer.arms:
            raise ShapeInferenceError(f"{label}: branch_concat with no arms")
        outs = [_apply_chain(arm, dims, f"{label}/arm{i}") for i, arm in enumerate(layer.arms)]
        spatial = {(o[0], o[1]) for o in outs}
        if len(spatial) != 1:
            raise ShapeInferenceError(f"{label}: branch arms disagree on spatial dims: {sorted(spatial)}")
        (oh, ow) = spatial.pop()
        return (oh, ow, sum(o[2] for o in outs))
    if kind == "repeat":
        for _ in range(layer.times):
            dims = _apply_chain(layer.body, dims, label)
        return dims
    if kind == "residual":
        inner = _apply_chain(layer.body, dims, label)
        if inner[:2] != dims[:2]:
            raise ShapeInferenceError(
                f"{label}: residual body changes spatial dims {dims[:2]} -> {inner[:2]}"
            )
        return dims
    raise ShapeInferenceError(f"{label}: unknown layer kind {kind!r}")


def _apply_chain(layers: Sequence[LayerSpec], dims: Dims, label: str) -> Dims:
    for i, layer in enumerate(layers):
        dims = _apply(layer, dims, f"{label}[{i}]")
    return dims


def infer_shapes(spec: ArchitectureSpec) -> list[tuple[int, str, Dims]]:
    """Output dims after each top-level layer: (index, layer name, (h, w, c))."""
    dims: Dims = spec.input_dims
    out = []
    for i, layer in enumerate(spec.layers):
        label = layer.name or f"{spec.name}:{i}"
        dims = _apply(layer, dims, label)
        out.append((i, layer.name, dims))
    return out


def output_dims(spec: ArchitectureSpec) -> Dims:
    return infer_shapes(spec)[-1][2]


def shape_by_name(spec: ArchitectureSpec) -> dict[str, Dims]:
    """Named top-level layers mapped to their output dims."""
    return {name: dims for _, name, dims in infer_shapes(spec) if name}


def _layer_parameters(layer: LayerSpec, dims: Dims, label: str) -> tuple[int, Dims]:
    h, w, c = dims
    kind = layer.kind
    out = _apply(layer, dims, label)
    if kind == "conv":
        kh, kw = layer.kernel
        return (kh * kw * c + 1) * layer.filters, out
    if kind == "separable_conv":
        kh, kw = layer.kernel
        return kh * kw * c + (c + 1) * layer.filters, out
    if kind == "dense":
        n_in = h * w * c
        return (n_in + 1) * layer.units, out
    if kind in ("maxpool", "avgpool_global", "dropout", "flatten"):
        return 0, out
    if kind == "branch_concat":
        total = 0
        for i, arm in enumerate(layer.arms):
            arm_dims = dims
            for j, inner in enumerate(arm):
                p, arm_dims = _layer_parameters(inner, arm_dims, f"{label}/arm{i}[{j}]")
                total += p
        return total, out
    if kind == "repeat":
        total = 0
        cur = dims
        for _ in range(layer.times):
            for j, inner in enumerate(layer.body):
                p, cur = _layer_parameters(inner, cur, f"{label}[{j}]")
                total += p
        return total, out
    raise UnsupportedLayerError(
        f"{label}: parameter counting is not modelled for composite kind {kind!r}"
    )


def count_parameters(spec: ArchitectureSpec) -> int:
    """Total trainable parameters across all primitive layers.

    Raises UnsupportedLayerError for composites whose internals are not
    modelled (residual bodies behind projections, inverted bottlenecks).
    """
    dims: Dims = spec.input_dims
    total = 0
    for i, layer in enumerate(spec.layers):
        label = layer.name or f"{spec.name}:{i}"
        p, dims = _layer_parameters(layer, dims, label)
        total += p
    return total


# -- compound scaling ---------------------------------------------------------

CONSTRAINT_TARGET = 2.0
CONSTRAINT_TOLERANCE = 0.1


@dataclass(frozen=True)
class ScalingCoefficients:
    """Depth/width/resolution growth bases with the shared exponent phi."""

    phi: float
    alpha: float
    beta: float
    gamma: float

    def __post_init__(self) -> None:
        if self.phi < 0:
            raise ValueError("phi must be >= 0")
        if min(self.alpha, self.beta, self.gamma) < 1.0:
            raise ValueError("alpha, beta and gamma must each be >= 1")

    @property
    def constraint_value(self) -> float:
        return self.alpha * self.beta**2 * self.gamma**2


class ScalingConstraintError(ValueError):
    """alpha * beta^2 * gamma^2 strays too far from 2."""


def compound_scale(
    base: tuple[float, float, int], coeffs: ScalingCoefficients
) -> tuple[float, float, int]:
    """Scale (depth multiplier, width multiplier, input resolution) by phi.

    Depth grows by alpha^phi, width by beta^phi and resolution by gamma^phi;
    resolution is rounded to the nearest integer (ties away from zero).
    """
    value = coeffs.constraint_value
    if abs(value - CONSTRAINT_TARGET) > CONSTRAINT_TOLERANCE:
        raise ScalingConstraintError(
            f"alpha*beta^2*gamma^2 = {value:.4f} is outside {CONSTRAINT_TARGET} +/- {CONSTRAINT_TOLERANCE}"
        )
    depth, width, resolution = base
    return (
        depth * coeffs.alpha**coeffs.phi,
        width * coeffs.beta**coeffs.phi,
        int(math.floor(resolution * coeffs.gamma**coeffs.phi + 0.5)),
    )


# -- reference descriptors -----------------------------------------------------
#
# The filter counts below follow each published layer table. Where a table's
# branch arithmetic does not add up to its own printed channel total (the
# inception-residual stem tail and both reduction blocks), the arm that the
# source leaves ambiguous is sized to honour the printed total, since the
# printed output sizes are the contract these descriptors reproduce.


def vgg16_layers(num_classes: int = 5, fc_units: int = 4096, block_convs=(2, 2, 3, 2, 2)) -> ArchitectureSpec:
    """Stacked 3x3 conv blocks with 2x2 max-pooling and a dense head."""
    layers: list[LayerSpec] = []
    filters = (64, 128, 256, 512, 512)
    for b, (f, n) in enumerate(zip(filters, block_convs), start=1):
        layers.append(repeat(n, [conv(3, f)], name=f"conv-block{b}"))
        layers.append(maxpool(2, 2, name=f"maxpool{b}"))
    layers.append(flatten())
    layers.append(repeat(2, [dense(fc_units)], name="fc-relu"))
    layers.append(dense(num_classes, name="fc-softmax"))
    return ArchitectureSpec("vgg16", (224, 224, 3), tuple(layers))


def vgg16_standard(num_classes: int = 5) -> ArchitectureSpec:
    """The canonical 13-conv variant (3 convs in each of the last three blocks)."""
    spec = vgg16_layers(num_classes, block_convs=(2, 2, 3, 3, 3))
    return ArchitectureSpec("vgg16-standard", spec.input_dims, spec.layers)


def _bottleneck(inner: int, out: int, stride: int) -> list[LayerSpec]:
    return [conv(1, inner, stride=stride), conv(3, inner), conv(1, out)]


def resnet50_layers(num_classes: int = 5, dropout_rate: float = 0.2) -> ArchitectureSpec:
    """50-layer residual network: bottleneck stages 3/4/6/3."""
    stages = []
    for i, (inner, out, blocks, stride) in enumerate(
        [(64, 256, 3, 1), (128, 512, 4, 2), (256, 1024, 6, 2), (512, 2048, 3, 2)], start=2
    ):
        body = _bottleneck(inner, out, stride) + [
            l for _ in range(blocks - 1) for l in _bottleneck(inner, out, 1)
        ]
        stages.append(repeat(1, body, name=f"conv{i}_x"))
    return ArchitectureSpec(
        "resnet50",
        (224, 224, 3),
        (
            conv(7, 64, stride=2, name="conv1"),
            maxpool(3, 2, padding="same", name="maxpool"),
            *stages,
            avgpool_global(name="global_avg_pooling"),
            dropout(dropout_rate, name="dropout"),
            dense(num_classes, name="fc_softmax"),
        ),
    )


def _inception_residual_a() -> LayerSpec:
    return residual(
        [
            branch_concat(
                [conv(1, 32)],
                [conv(1, 32), conv(3, 32)],
                [conv(1, 32), conv(3, 48), conv(3, 64)],
            ),
            conv(1, 384),
        ]
    )


def _inception_residual_b() -> LayerSpec:
    return residual(
        [
            branch_concat(
                [conv(1, 192)],
                [conv(1, 128), conv((1, 7), 160), conv((7, 1), 192)],
            ),
            conv(1, 1154),
        ]
    )


def _inception_residual_c() -> LayerSpec:
    return residual(
        [
            branch_concat(
                [conv(1, 192)],
                [conv(1, 192), conv((1, 3), 224), conv((3, 1), 256)],
            ),
            conv(1, 2048),
        ]
    )


def inception_resnet_v2_layers(num_classes: int = 5, dropout_rate: float = 0.4) -> ArchitectureSpec:
    """Inception-residual hybrid; stem and reductions at published granularity."""
    return ArchitectureSpec(
        "inception_resnet_v2",
        (299, 299, 3),
        (
            conv(3, 32, stride=2, padding="valid", name="stem1"),
            conv(3, 32, padding="valid", name="stem2"),
            conv(3, 64, name="stem3"),
            branch_concat([maxpool(3, 2)], [conv(3, 96, stride=2, padding="valid")], name="stem4"),
            branch_concat(
                [conv(1, 64), conv(3, 96, padding="valid")],
                [conv(1, 64), conv((7, 1), 64), conv((1, 7), 64), conv(3, 96, padding="valid")],
                name="stem5",
            ),
            branch_concat([maxpool(3, 2)], [conv(3, 64, stride=2, padding="valid")], name="stem6"),
            repeat(5, [_inception_residual_a()], name="inceptionresnet_a"),
            branch_concat(
                [maxpool(3, 2)],
                [conv(3, 384, stride=2, padding="valid")],
                [conv(1, 256), conv(3, 256), conv(3, 256, stride=2, padding="valid")],
                name="reduction_a",
            ),
            repeat(10, [_inception_residual_b()], name="inceptionresnet_b"),
            branch_concat(
                [maxpool(3, 2)],
                [conv(1, 256), conv(3, 384, stride=2, padding="valid")],
                [conv(1, 256), conv(3, 288, stride=2, padding="valid")],
                [conv(1, 256), conv(3, 288), conv(3, 224, stride=2, padding="valid")],
                name="reduction_b",
            ),
            repeat(5, [_inception_residual_c()], name="inceptionresnet_c"),
            avgpool_global(name="avgpool"),
            dropout(dropout_rate, name="dropout"),
            dense(num_classes, name="fc_softmax"),
        ),
    )


def _xception_entry_block(filters: int) -> list[LayerSpec]:
    return [
        separable_conv(3, filters),
        separable_conv(3, filters),
        maxpool(3, 2, padding="same"),
    ]


def xception_layers(num_classes: int = 5, dropout_rate: float = 0.2) -> ArchitectureSpec:
    """Depthwise-separable architecture: entry, 8x middle, exit flows."""
    entry = [
        conv(3, 32, stride=2, padding="valid"),
        conv(3, 64, padding="valid"),
        *_xception_entry_block(128),
        *_xception_entry_block(256),
        *_xception_entry_block(728),
    ]
    middle_block = residual([separable_conv(3, 728), separable_conv(3, 728), separable_conv(3, 728)])
    exit_flow = [
        separable_conv(3, 728),
        separable_conv(3, 1024),
        maxpool(3, 2, padding="same"),
        separable_conv(3, 1536),
        separable_conv(3, 2048),
        avgpool_global(),
    ]
    return ArchitectureSpec(
        "xception",
        (299, 299, 3),
        (
            repeat(1, entry, name="entry"),
            repeat(8, [middle_block], name="middle"),
            repeat(1, exit_flow, name="exit"),
            dropout(dropout_rate, name="dropout"),
            dense(num_classes, name="fc_softmax"),
        ),
    )


def _mbconv_stage(kernel: int, filters: int, blocks: int, first_stride: int) -> list[LayerSpec]:
    return [mbconv(kernel, filters, stride=first_stride)] + [
        mbconv(kernel, filters) for _ in range(blocks - 1)
    ]


def efficientnet_b0_layers(num_classes: int = 5, dropout_rate: float = 0.2) -> ArchitectureSpec:
    """Inverted-bottleneck baseline network (stage strides per the published table)."""
    return ArchitectureSpec(
        "efficientnet_b0",
        (224, 224, 3),
        (
            conv(3, 32, name="conv3"),
            mbconv(3, 16, stride=2, name="mbconv1"),
            repeat(1, _mbconv_stage(3, 24, 2, 1), name="mbconv6_k3_a"),
            repeat(1, _mbconv_stage(5, 40, 2, 2), name="mbconv6_k5_a"),
            repeat(1, _mbconv_stage(3, 80, 3, 2), name="mbconv6_k3_b"),
            repeat(1, _mbconv_stage(5, 112, 3, 1), name="mbconv6_k5_b"),
            repeat(1, _mbconv_stage(5, 192, 4, 2), name="mbconv6_k5_c"),
            mbconv(3, 320, stride=2, name="mbconv6_k3_c"),
            conv(1, 1280, name="conv1"),
            avgpool_global(name="pooling"),
            dropout(dropout_rate, name="dropout"),
            dense(num_classes, name="fc_softmax"),
        ),
    )


REFERENCE_ARCHITECTURES = {
    "vgg16": vgg16_layers,
    "resnet50": resnet50_layers,
    "inception_resnet_v2": inception_resnet_v2_layers,
    "xception": xception_layers,
    "efficientnet_b0": efficientnet_b0_layers,
}


@dataclass(frozen=True)
class BenchProfile:
    """Benchmark-facing configuration for one architecture."""

    name: str
    input_dims: tuple[int, int]
    dropout_rate: float
    total_layers: int


# Benchmark harness settings (input sizes and dropout differ from the
# architecture tables for some networks; benchmarking uses these).
BENCH_PROFILES = (
    BenchProfile("vgg16", (224, 224), 0.4, 25),
    BenchProfile("resnet50", (224, 224), 0.4, 178),
    BenchProfile("xception", (299, 299), 0.2, 135),
    BenchProfile("inception_resnet_v2", (299, 299), 0.4, 783),
    BenchProfile("efficientnet_b0", (256, 256), 0.2, 233),
    BenchProfile("efficientnet_b4", (256, 256), 0.4, 470),
)


def iter_reference_specs(num_classes: int = 5) -> Iterator[ArchitectureSpec]:
    for build in REFERENCE_ARCHITECTURES.values():
        yield build(num_classes)
