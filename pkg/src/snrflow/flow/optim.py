"""Adam over flat parameter mappings.

Updates are sparse in the parameter names: only entries present in the gradient
mapping move, and each entry keeps its own step count for bias correction. Expert
parameters that were not routed in a step therefore stay bit-identical and their
moment estimates do not decay.
"""

from __future__ import annotations

from collections.abc import Mapping

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from snrflow.nn.params import FlatParams


class AdamConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    lr: float = Field(1e-3, ge=0.0)
    beta1: float = Field(0.9, ge=0.0, lt=1.0)
    beta2: float = Field(0.999, ge=0.0, lt=1.0)
    eps: float = Field(1e-8, gt=0.0)
    grad_clip: float | None = Field(None, gt=0.0)


class Adam:
    def __init__(self, cfg: AdamConfig | None = None):
        self.cfg = cfg or AdamConfig()
        self.m: FlatParams = {}
        self.v: FlatParams = {}
        self.steps: dict[str, int] = {}

    def _clip(self, grads: Mapping[str, np.ndarray]) -> Mapping[str, np.ndarray]:
        if self.cfg.grad_clip is None:
            return grads
        norm = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))
        if norm <= self.cfg.grad_clip or norm == 0.0:
            return grads
        factor = self.cfg.grad_clip / norm
        return {name: g * factor for name, g in grads.items()}

    def step(self, params: FlatParams, grads: Mapping[str, np.ndarray]) -> FlatParams:
        """Return updated parameters; names without a gradient keep their arrays"""
        cfg = self.cfg
        updated = dict(params)
        for name, grad in self._clip(grads).items():
            if name not in params:
                raise KeyError(f"gradient for unknown parameter {name!r}")
            count = self.steps.get(name, 0) + 1
            m = cfg.beta1 * self.m.get(name, 0.0) + (1 - cfg.beta1) * grad
            v = cfg.beta2 * self.v.get(name, 0.0) + (1 - cfg.beta2) * grad * grad
            self.m[name], self.v[name], self.steps[name] = m, v, count
            if cfg.lr == 0.0:
                continue
            m_hat = m / (1 - cfg.beta1**count)
            v_hat = v / (1 - cfg.beta2**count)
            updated[name] = params[name] - cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.eps)
        return updated
