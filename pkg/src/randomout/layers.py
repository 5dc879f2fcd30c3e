"""Feed-forward layers with explicit forward and backward passes.

Contract shared by every layer: ``forward(x, mode)`` returns ``(y, cache)``
and ``backward(dout, cache)`` returns ``dx`` while accumulating parameter
gradients into the layer's ParamNodes with ``+=``. The loss is a batch
mean, so the 1/N division happens exactly once, in the softmax
cross-entropy head; layer backward passes sum over the batch.

ReLU uses the convention relu'(0) = 0, so a pre-activation that is <= 0
for every batch element routes an exactly-zero gradient upstream.
"""

from dataclasses import dataclass

import numpy as np

from . import tensor
from .rng import xavier_init

PARAM_ROLES = ("conv_kernel", "conv_bias", "dense_weight", "dense_bias", "bn_gamma", "bn_beta")

BN_EPS = 1e-5
BN_MOMENTUM = 0.9


@dataclass
class ParamNode:
    """A trainable array paired with its gradient accumulator."""

    id: int
    value: np.ndarray
    grad: np.ndarray
    role: str

    def __post_init__(self):
        if self.role not in PARAM_ROLES:
            raise ValueError(f"unknown param role {self.role!r}")
        if self.grad.shape != self.value.shape:
            raise ValueError(f"grad shape {self.grad.shape} != value shape {self.value.shape}")

    @classmethod
    def create(cls, pid, value, role):
        value = np.asarray(value, dtype=tensor.DTYPE)
        return cls(pid, value, np.zeros_like(value), role)


class Layer:
    """Base layer; subclasses fill in params and the forward/backward pair."""

    params = ()
    kind = "layer"

    def __init__(self, layer_id):
        self.layer_id = layer_id

    def forward(self, x, mode):
        raise NotImplementedError

    def backward(self, dout, cache):
        raise NotImplementedError


class Conv2d(Layer):
    """Valid cross-correlation with a [K,C,kH,kW] kernel and per-channel bias."""

    kind = "conv2d"

    def __init__(self, layer_id, in_channels, out_channels, kernel_size, stride, rng, alloc):
        super().__init__(layer_id)
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.stride = stride
        self.fan_in = in_channels * kernel_size * kernel_size
        self.fan_out = out_channels * kernel_size * kernel_size
        shape = (out_channels, in_channels, kernel_size, kernel_size)
        self.kernel = ParamNode.create(alloc(), xavier_init(shape, self.fan_in, self.fan_out, rng), "conv_kernel")
        self.bias = ParamNode.create(alloc(), np.zeros(out_channels), "conv_bias")
        self.params = (self.kernel, self.bias)

    def forward(self, x, mode):
        cols = tensor.im2col(x, self.kernel_size, self.kernel_size, self.stride)
        k = self.out_channels
        out = cols @ self.kernel.value.reshape(k, -1).T + self.bias.value
        n, _, h, w = x.shape
        ho = tensor.conv_output_size(h, self.kernel_size, self.stride)
        wo = tensor.conv_output_size(w, self.kernel_size, self.stride)
        return out.transpose(0, 2, 1).reshape(n, k, ho, wo), (x.shape, cols)

    def backward(self, dout, cache):
        x_shape, cols = cache
        n, k, ho, wo = dout.shape
        dmat = dout.reshape(n, k, ho * wo).transpose(0, 2, 1)  # [N, Ho*Wo, K]
        dkernel = np.einsum("npk,npc->kc", dmat, cols)
        self.kernel.grad += dkernel.reshape(self.kernel.value.shape)
        self.bias.grad += dout.sum(axis=(0, 2, 3))
        dcols = dmat @ self.kernel.value.reshape(k, -1)
        return tensor.col2im(dcols, x_shape, self.kernel_size, self.kernel_size, self.stride)


class ReLU(Layer):
    kind = "relu"

    def forward(self, x, mode):
        mask = x > 0
        return np.where(mask, x, 0.0), mask

    def backward(self, dout, cache):
        return dout * cache


class Dense(Layer):
    """Affine map x[N,D] @ W[D,U] + b[U], Xavier-initialized."""

    kind = "dense"

    def __init__(self, layer_id, in_features, units, rng, alloc):
        super().__init__(layer_id)
        self.in_features = in_features
        self.units = units
        self.weight = ParamNode.create(
            alloc(), xavier_init((in_features, units), in_features, units, rng), "dense_weight"
        )
        self.bias = ParamNode.create(alloc(), np.zeros(units), "dense_bias")
        self.params = (self.weight, self.bias)

    def forward(self, x, mode):
        return x @ self.weight.value + self.bias.value, x

    def backward(self, dout, cache):
        self.weight.grad += cache.T @ dout
        self.bias.grad += dout.sum(axis=0)
        return dout @ self.weight.value.T


class Flatten(Layer):
    kind = "flatten"

    def forward(self, x, mode):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, dout, cache):
        return dout.reshape(cache)


class AvgPool2d(Layer):
    """Valid average pooling over window x window patches."""

    kind = "avgpool"

    def __init__(self, layer_id, window, stride):
        super().__init__(layer_id)
        self.window = window
        self.stride = stride

    def forward(self, x, mode):
        n, c, h, w = x.shape
        flat = x.reshape(n * c, 1, h, w)
        cols = tensor.im2col(flat, self.window, self.window, self.stride)
        out = cols.mean(axis=2)
        ho = tensor.conv_output_size(h, self.window, self.stride)
        wo = tensor.conv_output_size(w, self.window, self.stride)
        return out.reshape(n, c, ho, wo), x.shape

    def backward(self, dout, cache):
        n, c, h, w = cache
        area = self.window * self.window
        dcols = np.repeat(dout.reshape(n * c, -1, 1), area, axis=2) / area
        dflat = tensor.col2im(dcols, (n * c, 1, h, w), self.window, self.window, self.stride)
        return dflat.reshape(cache)


class BatchNorm2d(Layer):
    """Per-channel batch normalization over the (N, H, W) axes.

    Train mode normalizes with biased batch statistics and updates the
    running mean/var with momentum 0.9; eval mode uses the running stats.
    Batches of size 1 are rejected in train mode (undefined variance).
    """

    kind = "batchnorm"

    def __init__(self, layer_id, channels, alloc):
        super().__init__(layer_id)
        self.channels = channels
        self.gamma = ParamNode.create(alloc(), np.ones(channels), "bn_gamma")
        self.beta = ParamNode.create(alloc(), np.zeros(channels), "bn_beta")
        self.params = (self.gamma, self.beta)
        self.running_mean = np.zeros(channels, dtype=tensor.DTYPE)
        self.running_var = np.ones(channels, dtype=tensor.DTYPE)

    def forward(self, x, mode):
        g = self.gamma.value[None, :, None, None]
        b = self.beta.value[None, :, None, None]
        if mode == "eval":
            xhat = (x - self.running_mean[None, :, None, None]) / np.sqrt(
                self.running_var[None, :, None, None] + BN_EPS
            )
            return g * xhat + b, None
        if x.shape[0] < 2:
            raise ValueError(f"batchnorm layer {self.layer_id}: train-mode batch of size 1 has undefined variance")
        mean = x.mean(axis=(0, 2, 3))
        var = x.var(axis=(0, 2, 3))
        self.running_mean = BN_MOMENTUM * self.running_mean + (1 - BN_MOMENTUM) * mean
        self.running_var = BN_MOMENTUM * self.running_var + (1 - BN_MOMENTUM) * var
        istd = 1.0 / np.sqrt(var + BN_EPS)
        xhat = (x - mean[None, :, None, None]) * istd[None, :, None, None]
        return g * xhat + b, (xhat, istd)

    def backward(self, dout, cache):
        xhat, istd = cache
        m = dout.shape[0] * dout.shape[2] * dout.shape[3]
        self.gamma.grad += (dout * xhat).sum(axis=(0, 2, 3))
        self.beta.grad += dout.sum(axis=(0, 2, 3))
        # dx = gamma*istd/m * (m*dout - sum(dout) - xhat * sum(dout*xhat))
        s1 = dout.sum(axis=(0, 2, 3))[None, :, None, None]
        s2 = (dout * xhat).sum(axis=(0, 2, 3))[None, :, None, None]
        g = self.gamma.value[None, :, None, None]
        return g * istd[None, :, None, None] / m * (m * dout - s1 - xhat * s2)


class Branches(Layer):
    """Parallel layer sequences over one input, concatenated channel-wise."""

    kind = "concat"

    def __init__(self, layer_id, branches):
        super().__init__(layer_id)
        self.branches = branches  # list of layer lists
        self.params = tuple(p for seq in branches for layer in seq for p in layer.params)

    def forward(self, x, mode):
        outs, caches = [], []
        for seq in self.branches:
            y, seq_cache = x, []
            for layer in seq:
                y, c = layer.forward(y, mode)
                seq_cache.append(c)
            outs.append(y)
            caches.append(seq_cache)
        widths = [o.shape[1] for o in outs]
        return np.concatenate(outs, axis=1), (caches, widths)

    def backward(self, dout, cache):
        caches, widths = cache
        dx = None
        offset = 0
        for seq, seq_cache, width in zip(self.branches, caches, widths):
            d = dout[:, offset : offset + width]
            offset += width
            for layer, c in zip(reversed(seq), reversed(seq_cache)):
                d = layer.backward(d, c)
            dx = d if dx is None else dx + d
        return dx


class SoftmaxCrossEntropy:
    """Mean softmax cross-entropy over the batch, computed from logits.

    Uses max-subtraction stabilization; returns the loss and d(loss)/d(logits).
    """

    def loss_and_grad(self, logits, labels):
        n, k = logits.shape
        labels = np.asarray(labels)
        if labels.min() < 0 or labels.max() >= k:
            raise ValueError(f"labels out of range [0, {k})")
        shifted = logits - logits.max(axis=1, keepdims=True)
        logsumexp = np.log(np.exp(shifted).sum(axis=1))
        loss = float((logsumexp - shifted[np.arange(n), labels]).mean())
        probs = np.exp(shifted - logsumexp[:, None])
        probs[np.arange(n), labels] -= 1.0
        return loss, probs / n
