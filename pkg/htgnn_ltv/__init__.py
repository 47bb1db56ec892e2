"""Multi-horizon customer lifetime value modelling with hypergraph supervision."""

__version__ = "0.1.0"
