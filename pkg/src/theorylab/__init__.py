"""Desk-scale flow-network laboratory.

Explicit DAG environments, exact tabular flow parameterizations, the three
balance objectives with analytic gradients, oracle solvers for ground truth,
a deterministic SGD trainer, and experiment drivers that check the known
convergence, sample-complexity, regularization and robustness bounds.
"""

__version__ = "0.1.0"
