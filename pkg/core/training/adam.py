"""
Adam Optimizer
Functional adaptive-moment updates over named parameter arrays
"""

from dataclasses import dataclass, field

import numpy as np
from loguru import logger

from core.errors import ShapeMismatchError

BETA1 = 0.9
BETA2 = 0.999
EPSILON = 1e-15


@dataclass
class AdamState:
    """First/second moments per parameter name, shared step counter"""

    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0
    skipped: int = 0

    def remap(self, prefix: str, source_index: np.ndarray, is_new: np.ndarray) -> "AdamState":
        """Gather per-row moments of parameters under prefix; new rows start at zero"""
        m, v = dict(self.m), dict(self.v)
        for name in list(m):
            if not name.startswith(prefix + "."):
                continue
            for store in (m, v):
                rows = store[name][source_index].copy()
                rows[is_new] = 0.0
                store[name] = rows
        return AdamState(m, v, self.step, self.skipped)


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    lr: float | dict[str, float],
) -> tuple[dict[str, np.ndarray], AdamState]:
    """
    One bias-corrected Adam update (β1=0.9, β2=0.999, ε=1e-15)

    Parameters without a gradient entry are passed through unchanged. A step with
    any non-finite gradient is skipped entirely and counted.

    Returns:
        (new parameter dict, new state); inputs are not modified
    """
    for name, g in grads.items():
        if g.shape != params[name].shape:
            raise ShapeMismatchError(f"Gradient for {name} has shape {g.shape}, parameter {params[name].shape}")
    if not all(np.all(np.isfinite(g)) for g in grads.values()):
        logger.warning(f"adam_skip step={state.step} reason=non_finite_gradient")
        return dict(params), AdamState(dict(state.m), dict(state.v), state.step, state.skipped + 1)

    step = state.step + 1
    m_new, v_new = dict(state.m), dict(state.v)
    out = dict(params)
    bias1 = 1.0 - BETA1**step
    bias2 = 1.0 - BETA2**step
    for name, g in grads.items():
        m_prev = state.m.get(name)
        v_prev = state.v.get(name)
        m = (1.0 - BETA1) * g if m_prev is None else BETA1 * m_prev + (1.0 - BETA1) * g
        v = (1.0 - BETA2) * g * g if v_prev is None else BETA2 * v_prev + (1.0 - BETA2) * g * g
        rate = lr[name] if isinstance(lr, dict) else lr
        out[name] = params[name] - rate * (m / bias1) / (np.sqrt(v / bias2) + EPSILON)
        m_new[name], v_new[name] = m, v
    return out, AdamState(m_new, v_new, step, state.skipped)
