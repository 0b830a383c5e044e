"""Active-learning workbench for interactive translation of sentence streams.

Pipeline: ingest a stream of source sentences in blocks, rank each block's
sentences by model uncertainty, interactively translate the top fraction with
a (simulated or live) user, and adapt the translation model online from the
corrected pairs.
"""

__version__ = "0.1.0"
