"""
Central finite-difference oracle for the autodiff engine.

Non-scalar outputs are reduced with a fixed random projection so that every output
element contributes to the checked gradient.
"""
import logging
from typing import Callable, Sequence

import numpy as np
from pydantic import BaseModel, Field

from autodiff.tensor import Tensor, backward, no_grad

logger = logging.getLogger(__name__)


class GradcheckReport(BaseModel):
    max_relative_error: float = Field(..., description="Worst relative error over all checked inputs")
    relative_errors: list[float] = Field(default_factory=list, description="Relative error per input")
    tolerance: float = Field(..., description="Threshold used for `passed`")

    @property
    def passed(self) -> bool:
        return self.max_relative_error < self.tolerance


def _projected(fn: Callable[..., Tensor], inputs: Sequence[Tensor], projection: np.ndarray | None):
    out = fn(*inputs)
    if projection is None:
        return out
    return (out * Tensor(projection, dtype=out.data.dtype)).sum()


def numerical_gradient(fn: Callable[..., Tensor], inputs: Sequence[Tensor], wrt: int,
                       projection: np.ndarray | None = None, eps: float = 1e-6) -> np.ndarray:
    target = inputs[wrt]
    grad = np.zeros_like(target.data)
    with no_grad():
        for idx in np.ndindex(target.shape):
            original = target.data[idx]
            target.data[idx] = original + eps
            plus = _projected(fn, inputs, projection).item()
            target.data[idx] = original - eps
            minus = _projected(fn, inputs, projection).item()
            target.data[idx] = original
            grad[idx] = (plus - minus) / (2 * eps)
    return grad


def gradcheck(fn: Callable[..., Tensor], inputs: Sequence[Tensor], eps: float = 1e-6,
              tolerance: float = 1e-4, seed: int = 0) -> GradcheckReport:
    """
    Compare reverse-mode gradients of `fn` with central finite differences.

    Args:
        fn: Function of the input tensors returning a Tensor.
        inputs: Tensors to differentiate against (their requires_grad is forced on).
        eps: Finite-difference step.
        tolerance: Relative error threshold, measured as ||a - n|| / max(||a||, ||n||).
        seed: Seed for the projection of non-scalar outputs.

    Returns:
        GradcheckReport with the relative error per input.
    """
    if any(t.data.dtype != np.float64 for t in inputs):
        logger.warning('gradcheck on non-64-bit inputs; finite differences will be unreliable')
    for t in inputs:
        t.requires_grad = True
        t.grad = None
    with no_grad():
        probe = fn(*inputs)
    projection = None
    if probe.data.size != 1:
        projection = np.random.default_rng(seed).standard_normal(probe.shape)

    backward(_projected(fn, inputs, projection))

    errors = []
    for i, t in enumerate(inputs):
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        numeric = numerical_gradient(fn, inputs, i, projection, eps)
        scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-12)
        errors.append(float(np.linalg.norm(analytic - numeric) / scale))
    return GradcheckReport(max_relative_error=max(errors), relative_errors=errors, tolerance=tolerance)
