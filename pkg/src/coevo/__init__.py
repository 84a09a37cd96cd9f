"""Multi-objective co-evolution of feature subsets and hidden-layer topologies."""

__version__ = "0.1.0"
