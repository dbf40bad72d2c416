"""Analytical Jacobians of pseudospectral discretizations, built in matrix form.

Submodules: ``matrix`` (operator algebra and linear solves),
``discretization`` (grids and differentiation matrices), ``opexpr``
(expression trees and their Jacobians), ``fdjac`` (finite-difference
oracle), ``newton`` (Newton and continuation), ``problems`` (worked
systems) and ``cli``.
"""

__version__ = "0.1.0"
