"""convkit: a from-scratch CNN training toolkit in which every analytic
gradient is validated against an independent finite-difference oracle."""

from .activations import ActivationKind
from .dataio import Dataset
from .layers import ConvGeometry, DenseLayer, KernelBank, PoolGeometry
from .losses import LossKind
from .network import Architecture, Network, TrainConfig

__version__ = "0.1.0"

__all__ = [
    "ActivationKind",
    "Architecture",
    "ConvGeometry",
    "Dataset",
    "DenseLayer",
    "KernelBank",
    "LossKind",
    "Network",
    "PoolGeometry",
    "TrainConfig",
    "__version__",
]
