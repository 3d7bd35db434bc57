"""Atrous-scan parallel vision Mamba U-Net for binary lesion segmentation, in numpy."""

__version__ = "0.1.0"
