"""Topology-only coverage-hole detection for wireless sensor networks.

Pipeline: generate a unit-disk network with planted voids, lay out its pure
topology with a force-directed engine, rasterize sensing disks, detect
interior uncovered regions, and score boundary nodes against ground truth.
"""

__version__ = "0.1.0"
