"""Object-centric state autoencoder with propositional planning for the 8-puzzle."""

from .model import FosaeConfig, FosaeModel, encode, load_checkpoint, save_checkpoint
from .pipeline import train

__all__ = ["FosaeConfig", "FosaeModel", "encode", "load_checkpoint", "save_checkpoint", "train"]
__version__ = "0.1.0"
