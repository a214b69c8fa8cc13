import hashlib
import logging
from abc import ABC, abstractmethod
from typing import Any, Iterator

import numpy as np

from autodiff.tensor import Tensor
from utils.errors import ShapeError

logger = logging.getLogger(__name__)


class BaseModule(ABC):
    """
    Abstract base class for every network in the pipeline.

    Parameters are the `Tensor` attributes of a module, found recursively through
    sub-module attributes and lists of sub-modules, in attribute definition order.
    Non-trainable constants are kept as plain numpy arrays so they never show up here.
    Underlying classes implement `forward`.
    """

    @abstractmethod
    def forward(self, *args, **kwargs) -> Any:
        pass

    def __call__(self, *args, **kwargs) -> Any:
        return self.forward(*args, **kwargs)

    def named_parameters(self, prefix: str = '') -> Iterator[tuple[str, Tensor]]:
        for name, value in vars(self).items():
            full_name = f"{prefix}{name}"
            if isinstance(value, Tensor):
                yield full_name, value
            elif isinstance(value, BaseModule):
                yield from value.named_parameters(prefix=f"{full_name}.")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, BaseModule):
                        yield from item.named_parameters(prefix=f"{full_name}.{i}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def requires_grad_(self, flag: bool = True) -> 'BaseModule':
        for p in self.parameters():
            p.requires_grad = flag
        return self

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data for name, p in self.named_parameters()}

    def load_state_dict(self, entries: dict[str, np.ndarray], strict: bool = True):
        """
        Copy arrays into the module parameters.

        Args:
            entries: Mapping of parameter name to array.
            strict: Raise on missing or unexpected names.
        """
        own = dict(self.named_parameters())
        if strict:
            missing = sorted(set(own) - set(entries))
            unexpected = sorted(set(entries) - set(own))
            if missing or unexpected:
                raise KeyError(f"state mismatch for {type(self).__name__}: missing {missing}, unexpected {unexpected}")
        for name, param in own.items():
            if name not in entries:
                continue
            array = np.asarray(entries[name])
            if array.shape != param.shape:
                raise ShapeError(f"{name}: stored shape {array.shape} does not match parameter shape {param.shape}")
            param.data = np.array(array, dtype=param.data.dtype)

    def fingerprint(self) -> str:
        """ sha256 over names and raw bytes of all parameters. """
        digest = hashlib.sha256()
        for name, p in self.named_parameters():
            digest.update(name.encode())
            digest.update(np.ascontiguousarray(p.data).tobytes())
        return digest.hexdigest()

    def num_parameters(self) -> int:
        return int(sum(p.data.size for p in self.parameters()))
