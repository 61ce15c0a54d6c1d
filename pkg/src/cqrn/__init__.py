"""Digital twin of an on-chip contextuality-certified QRNG.

Subpackages cover the full pipeline: programmable-mesh photonics simulation,
five-cycle contextuality analysis, min-entropy certification against a
constraint model, seeded two-universal extraction, and a small statistical
test battery. The ``qrng`` console script exposes the pieces end to end.
"""

__version__ = "0.1.0"
