"""Offline simplicial partitioning of multiparametric mixed-integer conic
programs into epsilon-suboptimal semi-explicit and explicit lookup trees."""

__version__ = "0.1.0"
