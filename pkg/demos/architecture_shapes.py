"""
Architecture shape inference and scaling
========================================

Each supported network is a declarative layer list; the engine derives
per-layer output sizes without executing anything. Parameter counting
covers primitive layers (the classic transfer-learning head sizes fall out
directly), and compound scaling grows depth/width/resolution together.
"""

from roadwatch.arch import (
    ArchitectureSpec,
    REFERENCE_ARCHITECTURES,
    ScalingCoefficients,
    compound_scale,
    count_parameters,
    dense,
    infer_shapes,
    vgg16_standard,
)

for name, build in REFERENCE_ARCHITECTURES.items():
    spec = build(num_classes=5)
    print(f"--- {name} (input {spec.input_dims}) ---")
    for _, layer_name, dims in infer_shapes(spec):
        if layer_name:
            shown = dims[2] if dims[:2] == (1, 1) else dims
            print(f"  {layer_name:<22} -> {shown}")
    print()

# Replacing a 1000-class head with a 2-class one on frozen features:
head_4096 = ArchitectureSpec("head", (1, 1, 4096), (dense(2),))
head_2048 = ArchitectureSpec("head", (1, 1, 2048), (dense(2),))
print(f"4096 -> 2 dense head: {count_parameters(head_4096)} trainable parameters")
print(f"2048 -> 2 dense head: {count_parameters(head_2048)} trainable parameters")
print(f"full 13-conv VGG-16 with a 2-class head: {count_parameters(vgg16_standard(2)):,}")
print()

# Compound scaling: alpha controls depth, beta width, gamma resolution,
# constrained so doubling phi roughly doubles compute.
coeffs = ScalingCoefficients(phi=1.0, alpha=1.2, beta=1.1, gamma=1.15)
print(f"constraint alpha*beta^2*gamma^2 = {coeffs.constraint_value:.4f}")
for phi in (0.0, 1.0, 2.0, 4.0):
    scaled = compound_scale((1.0, 1.0, 224), ScalingCoefficients(phi, 1.2, 1.1, 1.15))
    print(f"  phi={phi}: depth x{scaled[0]:.2f}, width x{scaled[1]:.2f}, resolution {scaled[2]}")
