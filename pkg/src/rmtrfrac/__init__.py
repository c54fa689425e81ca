"""Recursive multilevel trust-region (RMTR) solvers for phase-field fracture.

Modules
-------
mesh, transfer
    Nested structured Q1 hierarchies and pseudo-L2 transfer operators.
fracture, split
    Phase-field energy with a spectral tension/compression split.
trust_region, qp
    Single-level bound-constrained trust region and its subproblem solvers.
rmtr
    V-cycle with four coarse-level models.
problems, driver, cli, vtk
    Scenarios, load stepping, command line and VTK output.
"""

__version__ = "0.1.0"
