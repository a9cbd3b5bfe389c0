"""Class-frequency weighted segmentation loss, a micro encoder-decoder net and GVI metrics."""

__version__ = "0.1.0"
