"""Federated quantum kernel learning for time-series anomaly detection.

Submodules: ``qkernel`` (statevector fidelity kernels), ``datagen`` (synthetic
IIoT series), ``svm`` (SMO dual solver), ``fedproto`` (support-vector
federation), ``baselines`` (RBF and random-forest comparators), ``metrics``
and ``harness`` (experiments and CLI).
"""

__version__ = "0.1.0"
