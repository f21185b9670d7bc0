"""Outage restoration time prediction toolkit.

Pipeline stages: CSV ingest and cleaning, sweep-line overlap features,
sparse dictionary-based spectral clustering, per-cluster neural regression
with Levenberg-Marquardt training, similarity-weighted transfer learning,
and t-SNE based routing of unseen outages.
"""

__version__ = "0.1.0"
