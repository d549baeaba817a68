"""Graph learning, spatio-temporal GCNNs and explainability for irregular heterogeneous time series."""

__version__ = "0.1.0"
