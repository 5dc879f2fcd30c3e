"""Dense float64 array kernels: matmul and valid cross-correlation.

All functions are pure (inputs are never mutated) and operate on row-major
numpy arrays of dtype float64. 64-bit precision is a hard requirement:
the gradient checks resolve 1e-4 relative error, which float32 cannot.

Convolution convention: cross-correlation (no kernel flip), valid padding
only (no zero padding), output size (H - kH) // stride + 1. The backward
pass in layers.py relies on exactly this convention.
"""

import numpy as np

DTYPE = np.float64


def check_shape(dims):
    """Validate that dims is a sequence of positive integers."""
    dims = tuple(dims)
    if len(dims) == 0:
        raise ValueError("shape must have at least one dim")
    for d in dims:
        if not isinstance(d, (int, np.integer)) or d < 1:
            raise ValueError(f"invalid shape {dims}: every dim must be a positive int")
    return dims


def element_count(dims):
    n = 1
    for d in check_shape(dims):
        n *= int(d)
    return n


def zeros(shape):
    """All-zero float64 tensor of the given shape."""
    return np.zeros(check_shape(shape), dtype=DTYPE)


def matmul(a, b):
    """Matrix product of a[M,K] and b[K,N], row-major."""
    a = np.asarray(a, dtype=DTYPE)
    b = np.asarray(b, dtype=DTYPE)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    return a @ b


def conv_output_size(size, kernel, stride):
    """Spatial output size of a valid convolution: (size - kernel)//stride + 1."""
    if kernel > size:
        raise ValueError(f"kernel size {kernel} exceeds input size {size}")
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    return (size - kernel) // stride + 1


def im2col(x, kh, kw, stride):
    """Unfold x[N,C,H,W] into patch columns [N, Ho*Wo, C*kh*kw].

    Column order within a patch is (channel, row, col), matching a
    row-major reshape of a [C,kh,kw] kernel slab.
    """
    n, c, h, w = x.shape
    ho = conv_output_size(h, kh, stride)
    wo = conv_output_size(w, kw, stride)
    cols = np.empty((n, c, kh, kw, ho, wo), dtype=DTYPE)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = x[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride]
    return cols.reshape(n, c * kh * kw, ho * wo).transpose(0, 2, 1)


def col2im(cols, x_shape, kh, kw, stride):
    """Scatter-add patch columns back to an input-shaped array (im2col adjoint)."""
    n, c, h, w = x_shape
    ho = conv_output_size(h, kh, stride)
    wo = conv_output_size(w, kw, stride)
    cols = cols.transpose(0, 2, 1).reshape(n, c, kh, kw, ho, wo)
    x = np.zeros(x_shape, dtype=DTYPE)
    for i in range(kh):
        for j in range(kw):
            x[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += cols[:, :, i, j]
    return x


def conv2d_forward(x, kernel, bias, stride=1):
    """Valid cross-correlation of x[N,C,H,W] with kernel[K,C,kH,kW] plus bias[K].

    Returns [N,K,Ho,Wo] with Ho = (H-kH)//stride + 1 and likewise Wo.
    """
    x = np.asarray(x, dtype=DTYPE)
    kernel = np.asarray(kernel, dtype=DTYPE)
    bias = np.asarray(bias, dtype=DTYPE)
    if x.ndim != 4 or kernel.ndim != 4:
        raise ValueError(f"conv2d expects 4-d input and kernel, got {x.shape} and {kernel.shape}")
    n, c, h, w = x.shape
    k, kc, kh, kw = kernel.shape
    if kc != c:
        raise ValueError(f"conv2d channel mismatch: input {x.shape} vs kernel {kernel.shape}")
    if bias.shape != (k,):
        raise ValueError(f"conv2d bias shape {bias.shape} does not match {k} output channels")
    if kh > h or kw > w:
        raise ValueError(f"kernel {kernel.shape} larger than input {x.shape}")
    ho = conv_output_size(h, kh, stride)
    wo = conv_output_size(w, kw, stride)
    cols = im2col(x, kh, kw, stride)
    out = cols @ kernel.reshape(k, -1).T + bias
    return out.transpose(0, 2, 1).reshape(n, k, ho, wo)
