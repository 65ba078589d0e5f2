"""embalign: joint text/image embedding alignment and retrieval evaluation."""

__version__ = "0.1.0"
