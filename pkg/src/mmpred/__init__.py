"""Multimodal machine learning for early metastasis prediction from EHR data."""

__version__ = "0.1.0"
