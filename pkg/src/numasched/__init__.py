"""Desk-scale lab for NUMA-aware spatial scheduling of sliced in-memory indexes.

The package simulates a NUMA machine with synthesized performance-counter
output, runs sliced B+-tree / R-tree indexes under pluggable scheduling
policies, accumulates an offline trajectory dataset, and exports token
sequences for a return-conditioned sequence-model scheduler.
"""

__version__ = "0.1.0"
