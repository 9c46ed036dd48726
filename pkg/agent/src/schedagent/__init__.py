"""Learned scheduler: a decision-transformer over hardware-snapshot tokens.

Consumes the simulator lab's exported token containers (.npz per
trajectory plus a normalization sidecar), trains an autoregressive
action predictor conditioned on return-to-go, and rolls out new
slice-to-core schedules as policy JSON files.
"""

__version__ = "0.1.0"
