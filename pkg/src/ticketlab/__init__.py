"""Desk-scale lottery-ticket laboratory.

A small, fully deterministic stack for studying iterative magnitude
pruning (IMP) with rewinding on a from-scratch transformer encoder:
numerics (tape autodiff + counter-based RNG), the encoder itself,
mask algebra, masked training, a synthetic HMM task family, experiment
drivers (winning tickets, rewinding, transfer, overlap, multi-task),
and a batch CLI.
"""

__version__ = "0.1.0"
