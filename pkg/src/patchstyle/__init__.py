"""Patch-based style transfer: multi-scale patch matching with robust
aggregation, segmentation-weighted content fusion, palette transfer, and
edge-preserving denoising."""

__version__ = "0.1.0"

from .synthesis import SynthesisConfig, run_style_transfer

__all__ = ["SynthesisConfig", "run_style_transfer", "__version__"]
