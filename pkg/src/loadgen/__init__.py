"""Synthetic appliance load generation with behavior-routed adversarial models.

Traces are routed by activation statistics, intermittent devices are
clustered on shape features and modeled per cluster, continuous devices are
compressed to surrogates and modeled recurrently, and generated output is
scored with an eight-metric realism and diversity suite.
"""

__version__ = "0.1.0"
