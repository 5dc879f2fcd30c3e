"""Filter liveness scoring and reinitialization.

Each conv filter is scored by its convolutional gradient norm: the sum of
absolute loss gradients over the filter's kernel slab and bias element,
computed per minibatch. While within the active fraction of training,
any filter scoring strictly below the threshold is redrawn from the
Xavier distribution (bias back to zero), its optimizer moments are
zeroed, and its pending gradient is cleared so the stale update is
skipped. Dense and batchnorm parameters are never scored or reset.
"""

from dataclasses import dataclass

import numpy as np

from .model import filter_groups
from .rng import xavier_init


@dataclass(frozen=True)
class RandomOutConfig:
    """tau: reset threshold; p_active: fraction of training during which
    scanning is enabled; check_every: minibatches between scans."""

    tau: float
    p_active: float
    check_every: int = 1

    def __post_init__(self):
        if self.tau < 0:
            raise ValueError(f"tau must be >= 0, got {self.tau}")
        if not 0.0 <= self.p_active <= 1.0:
            raise ValueError(f"p_active must be in [0, 1], got {self.p_active}")
        if self.check_every < 1:
            raise ValueError(f"check_every must be >= 1, got {self.check_every}")


@dataclass
class ResetEvent:
    epoch: int
    batch: int
    layer_id: int
    filter_index: int
    cgn_before: float


def cgn(group):
    """Sum of absolute gradients over one filter's kernel slab and bias."""
    k = np.abs(group.kernel_param.grad[group.kernel_slice]).sum()
    b = np.abs(group.bias_param.grad[group.bias_slice]).sum()
    return float(k + b)


def count_below_threshold(model, tau):
    """Number of filters with cgn strictly below tau (telemetry only)."""
    return sum(1 for g in filter_groups(model) if cgn(g) < tau)


def scan_and_reset(model, optimizer, cfg, progress, rng, epoch=0, batch=0):
    """Reinitialize every filter whose cgn is strictly below cfg.tau.

    Called after backward and before the optimizer step. progress is the
    fraction of scheduled training batches already completed; once
    progress >= p_active the scan is a no-op. Resets consume only the
    given rng stream, scan filters in (layer, filter) order, and leave
    every parameter and optimizer moment outside the reset slices
    bit-identical.
    """
    if progress >= cfg.p_active:
        return []
    events = []
    for group in filter_groups(model):
        score = cgn(group)
        if score < cfg.tau:
            slab_shape = group.kernel_param.value[group.kernel_slice].shape
            group.kernel_param.value[group.kernel_slice] = xavier_init(
                slab_shape, group.fan_in, group.fan_out, rng
            )
            group.bias_param.value[group.bias_slice] = 0.0
            # Skip the pending update for this filter: its gradient is stale.
            group.kernel_param.grad[group.kernel_slice] = 0.0
            group.bias_param.grad[group.bias_slice] = 0.0
            optimizer.reset_state_slice(group.kernel_param, group.kernel_slice)
            optimizer.reset_state_slice(group.bias_param, group.bias_slice)
            events.append(ResetEvent(epoch, batch, group.layer_id, group.filter_index, score))
    return events
