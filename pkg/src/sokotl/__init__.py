"""Sokoban transfer/curriculum lab.

Train pixel-input actor-critic agents on procedurally generated Sokoban
instances, transplant and freeze subsets of learned layers across tasks of
different difficulty, and measure solved ratios under a fixed protocol.
"""

__version__ = "0.1.0"
