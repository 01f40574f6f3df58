"""Exact traces of cycle integrals of meromorphic Hilbert modular forms.

The package computes, in exact rational arithmetic, the constant-term
formula expressing such traces as rational multiples of pi*i, together
with a floating-point layer that cross-checks every analytic ingredient
(theta transformation laws, xi-operator identities, raising identities).
"""

__version__ = "0.1.0"
