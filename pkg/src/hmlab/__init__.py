"""Hidden Matching communication lab: quantum SMP protocol, classical one-way
baselines, and the combinatorics behind the direct product bound."""

__version__ = "0.1.0"
