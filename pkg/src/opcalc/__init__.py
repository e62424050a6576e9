"""opcalc: numerical workbench for iterated semigroup integrals.

Modules
-------
grassmann      exact exterior-algebra arithmetic over bitmask monomials
linalg         dense complex spectral calculus and matrix exponentials
phi_core       three independent evaluators of the iterated integral
clifford       spinor representations, supertraces, curvature series
jlo            graded cocycle evaluation and flat-model small-time limits
stochastic_mc  bridge sampling, path functionals, Feynman-Kac estimators
cli            command-line front end and the acceptance self-test
"""

__version__ = "0.1.0"
