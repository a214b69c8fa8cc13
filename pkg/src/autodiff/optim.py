import logging
from typing import Sequence

import numpy as np

from autodiff.tensor import Tensor

logger = logging.getLogger(__name__)


class AdamState:
    """ First/second moment buffers aligned with a parameter list, plus the shared step counter. """

    def __init__(self, params: Sequence[Tensor]):
        self.m = [np.zeros_like(p.data) for p in params]
        self.v = [np.zeros_like(p.data) for p in params]
        self.step = 0


def adam_step(params: Sequence[Tensor], grads: Sequence[np.ndarray | None], state: AdamState,
              lr: float = 2e-4, beta1: float = 0.5, beta2: float = 0.999, eps: float = 1e-8):
    """
    One bias-corrected Adam update, in place on `params[i].data`.
    Parameters whose gradient is None are left untouched.
    """
    state.step += 1
    correction1 = 1.0 - beta1 ** state.step
    correction2 = 1.0 - beta2 ** state.step
    for i, (param, grad) in enumerate(zip(params, grads)):
        if grad is None:
            continue
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * grad
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * grad * grad
        m_hat = state.m[i] / correction1
        v_hat = state.v[i] / correction2
        param.data -= (lr * m_hat / (np.sqrt(v_hat) + eps)).astype(param.data.dtype)


class Adam:
    """
    Adam optimizer over a named parameter set, with constant learning rate.
    Named so that its moments can be written to and read from a checkpoint archive.
    """

    def __init__(self, named_params: dict[str, Tensor], lr: float = 2e-4,
                 beta1: float = 0.5, beta2: float = 0.999, eps: float = 1e-8):
        self.names = list(named_params)
        self.params = list(named_params.values())
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.state = AdamState(self.params)

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        adam_step(self.params, [p.grad for p in self.params], self.state,
                  lr=self.lr, beta1=self.beta1, beta2=self.beta2, eps=self.eps)

    def state_dict(self) -> dict[str, np.ndarray]:
        entries = {'step': np.array(self.state.step, dtype=np.int64)}
        for name, m, v in zip(self.names, self.state.m, self.state.v):
            entries[f'm.{name}'] = m
            entries[f'v.{name}'] = v
        return entries

    def load_state_dict(self, entries: dict[str, np.ndarray]):
        self.state.step = int(entries['step'])
        for i, name in enumerate(self.names):
            self.state.m[i] = np.array(entries[f'm.{name}'], dtype=self.params[i].data.dtype)
            self.state.v[i] = np.array(entries[f'v.{name}'], dtype=self.params[i].data.dtype)
        logger.debug(f'restored Adam state at step {self.state.step} for {len(self.names)} tensors')
