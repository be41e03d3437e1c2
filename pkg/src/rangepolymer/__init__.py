"""Laboratory for a simple random walk penalized by the size of its range.

Subpackages:

- env: random field generation, prefix sums, Brownian coupling, Skorokhod
  embedding.
- rangelaw: exact and spectral laws of the range endpoints of the walk.
- polymer: quenched partition functions, endpoint laws, free-energy expansions.
- stochproc: Brownian paths, meanders, Bessel processes, excursions, and the
  couplings between them.
- varprob: limiting variational problems (argmax location, second- and
  third-order variational values, parabolic-drift maxima).
- cli: configuration-driven command line front end.
"""

__version__ = "0.1.0"
