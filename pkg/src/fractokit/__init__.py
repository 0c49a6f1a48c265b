"""Dataset curation, leakage auditing and evaluation toolkit for SEM
fractography corpora."""

__version__ = "0.1.0"
