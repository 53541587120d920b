"""Symmetry-aware control Lyapunov function reaching, its kinematic simulator,
and a learned controller trained with a differential (Lyapunov decrease) constraint."""

__version__ = "0.1.0"
