"""Few-shot grasp-area teaching toolkit."""

__version__ = "0.1.0"
