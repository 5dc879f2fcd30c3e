"""Model assembly: declarative layer specs, shape checking, filter groups.

A model is a static feed-forward stack of layers (with optional parallel
branch stages that concatenate channel-wise) ending in a softmax
cross-entropy head. Shapes are inferred and validated when the model is
built; weights are drawn from a single init stream in declaration order,
so a (seed, spec) pair always yields bit-identical parameters.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import tensor
from .layers import AvgPool2d, BatchNorm2d, Branches, Conv2d, Dense, Flatten, ReLU, SoftmaxCrossEntropy

LAYER_KINDS = ("conv2d", "relu", "dense", "softmax_ce", "batchnorm", "flatten", "avgpool", "concat")


@dataclass
class LayerSpec:
    """One layer declaration; dimension fields apply per kind.

    conv2d: out_channels, kernel_size, stride. dense: units.
    avgpool: window (None means global) and stride. concat: branches,
    a list of LayerSpec sequences run in parallel on the same input.
    """

    kind: str
    out_channels: Optional[int] = None
    kernel_size: Optional[int] = None
    stride: int = 1
    units: Optional[int] = None
    window: Optional[int] = None
    branches: Optional[list] = None

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")


@dataclass
class FilterGroup:
    """Index set for one conv filter: output channel k's kernel slab plus bias k.

    The kernel and bias slices are disjoint across groups of a layer and
    jointly cover the layer's parameters. fan_in/fan_out are the owning
    layer's fans, used to redraw the slab on reset.
    """

    layer_id: int
    filter_index: int
    kernel_param: object
    bias_param: object
    kernel_slice: tuple
    bias_slice: tuple
    fan_in: int
    fan_out: int


class Model:
    """A built layer stack with its loss head and parameter registry."""

    def __init__(self, layers, input_shape, num_classes):
        self.layers = layers
        self.input_shape = tuple(input_shape)
        self.num_classes = num_classes
        self.loss_head = SoftmaxCrossEntropy()
        self.params = []
        for layer in layers:
            self.params.extend(layer.params)

    def forward(self, x, mode="train"):
        """Run all layers; returns (logits, cache) for backward."""
        if mode not in ("train", "eval"):
            raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
        x = np.asarray(x, dtype=tensor.DTYPE)
        if x.shape[1:] != self.input_shape:
            raise ValueError(f"model input shape {x.shape[1:]} does not match declared {self.input_shape}")
        caches = []
        for layer in self.layers:
            x, c = layer.forward(x, mode)
            caches.append(c)
        return x, (x, caches)

    def backward(self, cache, labels):
        """Mean cross-entropy loss; writes d(loss)/d(param) into every ParamNode."""
        logits, caches = cache
        loss, dlogits = self.loss_head.loss_and_grad(logits, labels)
        self.backward_from(dlogits, caches)
        return loss

    def backward_from(self, dout, caches):
        """Backpropagate an arbitrary output gradient through the layer stack."""
        for layer, c in zip(reversed(self.layers), reversed(caches)):
            dout = layer.backward(dout, c)
        return dout

    def zero_grads(self):
        for p in self.params:
            p.grad[...] = 0.0


class _Counter:
    def __init__(self):
        self.n = 0

    def __call__(self):
        self.n += 1
        return self.n - 1


def _build_sequence(specs, in_shape, rng, next_layer_id, next_param_id):
    """Construct layers for a spec list, validating shape compatibility."""
    layers = []
    shape = in_shape
    for spec in specs:
        lid = next_layer_id()
        if spec.kind == "conv2d":
            if len(shape) != 3:
                raise ValueError(f"layer {lid} (conv2d): needs [C,H,W] input, got {shape}")
            c, h, w = shape
            if spec.kernel_size > h or spec.kernel_size > w:
                raise ValueError(f"layer {lid} (conv2d): kernel {spec.kernel_size} larger than input {h}x{w}")
            layers.append(Conv2d(lid, c, spec.out_channels, spec.kernel_size, spec.stride, rng, next_param_id))
            shape = (
                spec.out_channels,
                tensor.conv_output_size(h, spec.kernel_size, spec.stride),
                tensor.conv_output_size(w, spec.kernel_size, spec.stride),
            )
        elif spec.kind == "relu":
            layers.append(ReLU(lid))
        elif spec.kind == "batchnorm":
            if len(shape) != 3:
                raise ValueError(f"layer {lid} (batchnorm): needs [C,H,W] input, got {shape}")
            layers.append(BatchNorm2d(lid, shape[0], next_param_id))
        elif spec.kind == "avgpool":
            if len(shape) != 3:
                raise ValueError(f"layer {lid} (avgpool): needs [C,H,W] input, got {shape}")
            c, h, w = shape
            window = spec.window if spec.window is not None else h
            if window > h or window > w:
                raise ValueError(f"layer {lid} (avgpool): window {window} larger than input {h}x{w}")
            layers.append(AvgPool2d(lid, window, spec.stride))
            shape = (c, tensor.conv_output_size(h, window, spec.stride), tensor.conv_output_size(w, window, spec.stride))
        elif spec.kind == "flatten":
            layers.append(Flatten(lid))
            shape = (int(np.prod(shape)),)
        elif spec.kind == "dense":
            if len(shape) != 1:
                raise ValueError(f"layer {lid} (dense): needs flat input, got {shape}; add a flatten layer")
            layers.append(Dense(lid, shape[0], spec.units, rng, next_param_id))
            shape = (spec.units,)
        elif spec.kind == "concat":
            if len(shape) != 3:
                raise ValueError(f"layer {lid} (concat): needs [C,H,W] input, got {shape}")
            branch_layers, out_shapes = [], []
            for seq in spec.branches:
                sub, sub_shape = _build_sequence(seq, shape, rng, next_layer_id, next_param_id)
                branch_layers.append(sub)
                out_shapes.append(sub_shape)
            spatial = {s[1:] for s in out_shapes}
            if len(spatial) != 1 or any(len(s) != 3 for s in out_shapes):
                raise ValueError(f"layer {lid} (concat): branch output shapes {out_shapes} do not align")
            layers.append(Branches(lid, branch_layers))
            shape = (sum(s[0] for s in out_shapes),) + out_shapes[0][1:]
        else:
            raise ValueError(f"layer {lid}: kind {spec.kind!r} not buildable here")
    return layers, shape


def build_model(specs, input_shape, rng):
    """Build a Model from LayerSpecs; the last spec must be softmax_ce."""
    if not specs or specs[-1].kind != "softmax_ce":
        raise ValueError("model specs must end with a softmax_ce head")
    if specs[-1].units is None or specs[-1].units < 2:
        raise ValueError("softmax_ce head needs units = number of classes >= 2")
    layers, shape = _build_sequence(specs[:-1], tuple(input_shape), rng, _Counter(), _Counter())
    num_classes = specs[-1].units
    if shape != (num_classes,):
        raise ValueError(f"final layer output {shape} does not match softmax_ce over {num_classes} classes")
    return Model(layers, input_shape, num_classes)


def _iter_layers(layers):
    for layer in layers:
        if isinstance(layer, Branches):
            for seq in layer.branches:
                yield from _iter_layers(seq)
        else:
            yield layer


def filter_groups(model):
    """One FilterGroup per conv output channel, in (layer_id, filter) order."""
    groups = []
    for layer in sorted(_iter_layers(model.layers), key=lambda l: l.layer_id):
        if isinstance(layer, Conv2d):
            for k in range(layer.out_channels):
                groups.append(
                    FilterGroup(
                        layer_id=layer.layer_id,
                        filter_index=k,
                        kernel_param=layer.kernel,
                        bias_param=layer.bias,
                        kernel_slice=(k,),
                        bias_slice=(k,),
                        fan_in=layer.fan_in,
                        fan_out=layer.fan_out,
                    )
                )
    return groups


def two_branch_relu_net(weights):
    """Two-unit ReLU net over (x0, x1), built from the dense and relu layers.

    With weights w = [w0..w8], evaluates
        f(x) = max(0, w6*max(0, w0*x0 + w1*x1 + w2) + w7*max(0, w3*x0 + w4*x1 + w5) + w8)
    Returns a function (x0, x1) -> (value, gradient wrt all nine weights).
    Used to exercise gradient routing: a branch whose inner ReLU stays
    negative receives exactly zero gradient on its three weights.
    """
    w = np.asarray(weights, dtype=tensor.DTYPE)
    if w.shape != (9,):
        raise ValueError(f"expected 9 weights, got shape {w.shape}")
    specs = [
        LayerSpec("dense", units=2),
        LayerSpec("relu"),
        LayerSpec("dense", units=1),
        LayerSpec("relu"),
    ]
    rng = np.random.Generator(np.random.Philox(key=np.array([0, 0], dtype=np.uint64)))
    layers, _ = _build_sequence(specs, (2,), rng, _Counter(), _Counter())
    d1, _, d2, _ = layers
    d1.weight.value[...] = [[w[0], w[3]], [w[1], w[4]]]
    d1.bias.value[...] = [w[2], w[5]]
    d2.weight.value[...] = [[w[6]], [w[7]]]
    d2.bias.value[...] = [w[8]]

    def evaluate(x0, x1):
        x = np.array([[x0, x1]], dtype=tensor.DTYPE)
        caches = []
        y = x
        for layer in layers:
            y, c = layer.forward(y, "eval")
            caches.append(c)
        for p in (d1.weight, d1.bias, d2.weight, d2.bias):
            p.grad[...] = 0.0
        d = np.ones((1, 1), dtype=tensor.DTYPE)
        for layer, c in zip(reversed(layers), reversed(caches)):
            d = layer.backward(d, c)
        grads = np.array(
            [
                d1.weight.grad[0, 0], d1.weight.grad[1, 0], d1.bias.grad[0],
                d1.weight.grad[0, 1], d1.weight.grad[1, 1], d1.bias.grad[1],
                d2.weight.grad[0, 0], d2.weight.grad[1, 0], d2.bias.grad[0],
            ]
        )
        return float(y[0, 0]), grads

    return evaluate
