"""Yang-Mills flow, weights and Harder-Narasimhan stability on lattice torus bundles."""

__version__ = "0.1.0"
