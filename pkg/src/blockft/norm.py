"""Batch normalization with an explicit running-statistics policy.

Standard batch norm normalizes training batches with batch statistics. For
transfer fine-tuning we instead normalize with the accumulated (population)
statistics, optionally continuing to update them from fine-tuning batches.
Evaluation always normalizes with the running statistics and updates nothing.

``stats_mode`` applies only while the module is in training mode:

* ``batch``      - normalize with batch stats, update running stats (classic).
* ``population`` - normalize with the current running stats, then update them
                   from the batch.
* ``frozen``     - normalize with running stats, never update.
"""

from __future__ import annotations

import torch
from torch import nn

from .errors import ValidationError

STATS_MODES = ("batch", "population", "frozen")


class PolicyBatchNorm2d(nn.Module):
    def __init__(self, num_features: int, eps: float = 1e-5, momentum: float = 0.1):
        super().__init__()
        self.num_features = num_features
        self.eps = eps
        self.momentum = momentum
        self.stats_mode = "batch"
        self.weight = nn.Parameter(torch.ones(num_features))
        self.bias = nn.Parameter(torch.zeros(num_features))
        self.register_buffer("running_mean", torch.zeros(num_features))
        self.register_buffer("running_var", torch.ones(num_features))

    def set_stats_mode(self, mode: str):
        if mode not in STATS_MODES:
            raise ValidationError(f"stats_mode must be one of {STATS_MODES}")
        self.stats_mode = mode

    def _update_running(self, x: torch.Tensor):
        with torch.no_grad():
            dims = (0, 2, 3)
            mean = x.mean(dim=dims)
            var = x.var(dim=dims, unbiased=True)
            m = self.momentum
            self.running_mean.mul_(1 - m).add_(mean, alpha=m)
            self.running_var.mul_(1 - m).add_(var, alpha=m)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.dim() != 4:
            raise ValidationError("expected NCHW input")
        if self.training and self.stats_mode == "batch":
            dims = (0, 2, 3)
            mean = x.mean(dim=dims)
            var = x.var(dim=dims, unbiased=False)
            self._update_running(x)
        elif self.training and self.stats_mode == "population":
            # normalize with the pre-update statistics; clone first because the
            # update mutates the buffers in place
            mean = self.running_mean.clone()
            var = self.running_var.clone()
            self._update_running(x)
        else:
            mean = self.running_mean
            var = self.running_var
        shape = (1, self.num_features, 1, 1)
        x_hat = (x - mean.view(shape)) / torch.sqrt(var.view(shape) + self.eps)
        return x_hat * self.weight.view(shape) + self.bias.view(shape)

    def extra_repr(self) -> str:
        return f"{self.num_features}, eps={self.eps}, momentum={self.momentum}, stats_mode={self.stats_mode}"
