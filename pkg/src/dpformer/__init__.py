"""Dynamic prompt transformer for class-incremental learning, on a numpy autodiff core."""
from .model import DPFormer, ForwardOutput, ModelConfig

__all__ = ["DPFormer", "ForwardOutput", "ModelConfig"]
__version__ = "0.1.0"
