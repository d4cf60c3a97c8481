"""Domainness-conditioned unpaired image translation.

Generates a continuum of intermediate domains between a source and one or
more target image domains, plus the downstream pipeline that uses the
intermediate-domain images to boost domain-adversarial training.
"""

__version__ = "0.1.0"
