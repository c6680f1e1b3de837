"""
Nevanlinna Lab - numerical value distribution theory for meromorphic maps

Characteristic profiles, difference-operator bounds, Picard-type invariance
checks and difference Riccati analysis on the sphere of radius r in C^n.
"""

__version__ = "0.1.0"
