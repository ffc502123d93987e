"""Stopping targets shared by the solvers.

A target says when a run is *done*; solvers additionally enforce their own
hard caps (outer-iteration limits, optional IFO caps) and flag the run
when a cap fires before the target is met.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class OuterIters:
    """Run exactly this many outer iterations."""

    iters: int


@dataclass(frozen=True)
class EpochsTarget:
    """Run this many effective epochs (baseline solvers)."""

    epochs: int


@dataclass(frozen=True)
class GradNormTarget:
    """Stop once the full-objective gradient norm is <= eps."""

    eps: float


@dataclass(frozen=True)
class SuboptTarget:
    """Stop once objective - reference <= eps."""

    eps: float
    reference: float


@dataclass(frozen=True)
class IfoBudget:
    """Stop once the run has consumed this many oracle touches."""

    budget: int
