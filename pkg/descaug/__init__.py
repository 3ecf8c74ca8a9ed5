"""descaug: acoustic descriptor measurement and caption augmentation for text-to-audio datasets."""

__version__ = "0.1.0"
