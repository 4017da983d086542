from . import blocks, gradcheck, optim, tensor
from .tensor import Tensor

__all__ = ["Tensor", "tensor", "blocks", "optim", "gradcheck"]
