"""Synthetic stereo scenes, cost-volume stereo matching, head decoding, metrics and planning."""

__version__ = "0.1.0"
