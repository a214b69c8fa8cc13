import numpy as np

from autodiff import ops
from autodiff.conv import conv2d, conv_transpose2d
from autodiff.tensor import Tensor
from models.base_module import BaseModule

INIT_STD = 0.02


def normal_param(rng: np.random.Generator, shape: tuple[int, ...], std: float = INIT_STD) -> Tensor:
    return Tensor(rng.normal(0.0, std, size=shape), requires_grad=True)


def zero_param(shape: tuple[int, ...]) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True)


class Conv2d(BaseModule):
    def __init__(self, in_channels: int, out_channels: int, kernel_size: int, rng: np.random.Generator,
                 stride: int = 1, padding: int = 0, std: float = INIT_STD):
        self.weight = normal_param(rng, (out_channels, in_channels, kernel_size, kernel_size), std)
        self.bias = zero_param((out_channels,))
        self.stride = stride
        self.padding = padding

    def forward(self, x: Tensor) -> Tensor:
        return conv2d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)


class ConvTranspose2d(BaseModule):
    def __init__(self, in_channels: int, out_channels: int, kernel_size: int, rng: np.random.Generator,
                 stride: int = 1, padding: int = 0, std: float = INIT_STD):
        self.weight = normal_param(rng, (in_channels, out_channels, kernel_size, kernel_size), std)
        self.bias = zero_param((out_channels,))
        self.stride = stride
        self.padding = padding

    def forward(self, x: Tensor) -> Tensor:
        return conv_transpose2d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)


class Linear(BaseModule):
    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator | None = None,
                 std: float = INIT_STD):
        if rng is None:
            # zero-initialized head
            self.weight = zero_param((in_features, out_features))
        else:
            self.weight = normal_param(rng, (in_features, out_features), std)
        self.bias = zero_param((out_features,))

    def forward(self, x: Tensor) -> Tensor:
        return ops.linear(x, self.weight, self.bias)
