"""Continuous Wasserstein-2 barycenters from samples.

Trains input-convex potential networks and a generator with an alternating
min-max-min scheme, recovers the barycenter by two routes (generator
pushforward and potential-gradient pushforward), and scores runs against
the closed-form Gaussian barycenter via the Bures-Wasserstein UVP metric.
"""

__version__ = "0.1.0"
