"""Personalized product search: rank a catalog for (user, query) pairs by
fusing the query with attentively weighted long- and short-term user
preferences learned from purchase histories."""

__version__ = "0.1.0"
