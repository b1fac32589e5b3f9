"""Stdio JSONL bridge hosting a perspective depth teacher model.

The bridge owns the deep-learning stack (when a real model is mounted) so
the training-side toolkit never links it. Wire protocol: one JSON metadata
line on startup, then newline-delimited request/response JSON with depth
payloads handed off as PFM files.
"""

__version__ = "0.1.0"
