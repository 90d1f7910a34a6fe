"""Multi-armed bandits with generalized temporally-partitioned rewards."""

__version__ = "0.1.0"
