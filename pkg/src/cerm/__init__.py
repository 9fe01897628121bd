"""Constrained empirical risk minimization on implicit manifolds.

Exact-constraint SGD in graph-coordinate charts, a QMF wavelet constraint
family with a periodic DWT pyramid, Fourier contour preprocessing, and
reproducible desk-scale experiments behind the ``cerm`` CLI.
"""

__version__ = "0.1.0"
