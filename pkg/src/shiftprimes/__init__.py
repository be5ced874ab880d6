"""Finite-scale tools for Gowers norms, PET reduction, prime weights and ergodic averages.

Modules: ``pet`` (polynomial families and van der Corput reduction), ``gowers``
(uniformity norms), ``primes`` (sieve and W-trick weights), ``dynamics`` (finite
systems and weighted averages), ``patterns`` (windowed pattern search) and
``cli``.
"""

__version__ = "0.1.0"
