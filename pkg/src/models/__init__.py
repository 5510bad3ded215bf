"""Kernels and the dataset container."""

from .dataset import Dataset
from .kernels import Bandwidth, KernelConstants, KernelFamily, KernelSpec

__all__ = ["Bandwidth", "Dataset", "KernelConstants", "KernelFamily", "KernelSpec"]
