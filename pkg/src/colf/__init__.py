"""Compositional object light fields: unsupervised single-image scene
decomposition into per-object neural light fields, composed by a learned
visibility module, with editing, metrics, benchmarking, and a render service.
"""

__version__ = "0.1.0"
