"""Stochastic-mechanics and path-integral numerics in one dimension.

Modules: ``grid`` (lattice fields and stencils), ``evolve`` (Schrodinger and
heat solvers, explicit kernels), ``fields`` (Nelson drifts), ``sde`` (path
ensembles and noise diagnostics), ``operators`` (generator identities),
``pathfunc`` (path weights and Feynman-type representations), ``trotter``
(time slicing) and ``cli``.
"""
__version__ = "0.1.0"
