"""Analytic extra cost of the table stage, cross-checked against a
built model and the instrumented op counter."""

import numpy as np

from lookupvnet import gradcore
from lookupvnet.costing import cost_report, extra_flops, extra_params
from lookupvnet.gradcore import Tensor, conv2d
from lookupvnet.network import ConvSpec, ModelConfig, build_model

print("cost report, full tables u=1 on a 32x32 image (k=3, j=16):")
print(cost_report(u=1, k=3, j=16).as_text())
print()
print("cost report, compressed tables c=16:")
print(cost_report(c=16).as_text())
print()

# Cross-check the parameter formula against real models.
def model_params(channels):
    cfg = ModelConfig(
        input_channels=channels,
        conv_blocks=(ConvSpec(kernel=3, filters=16, pool=True),),
        head_width=8,
        class_count=10,
        input_size=(16, 16),
        seed=0,
    )
    return build_model(cfg).param_count()

for u in (1, 2, 5):
    measured = model_params(3 * u) + 256 * 3 * u - model_params(3)
    print(f"u={u}: formula {extra_params(u, 3, 16):6d}, measured on built models {measured:6d}")

# Cross-check the flop formula against the instrumented first layer.
def first_layer_flops(channels):
    with gradcore.count_flops() as counter:
        conv2d(Tensor(np.zeros((1, channels, 16, 16))),
               Tensor(np.zeros((16, channels, 3, 3))), padding=1)
    return counter.flops

delta = first_layer_flops(6) - first_layer_flops(3)
formula = extra_flops(16, 16, 1, 3, 16, 2) - 16 * 16 * 3
print(f"first-layer flop delta at u=2: counter {delta}, formula {formula}")
