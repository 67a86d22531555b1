"""Desk-scale hardware-Trojan power side-channel simulator and detector.

Pipeline-stage power modeling of a trusted processor, Trojan signature
injection, single-port time-multiplexed acquisition, process-variation and
aging perturbation, and a lightweight MLP run-time detector with topology
design-space exploration.
"""

__version__ = "0.1.0"
