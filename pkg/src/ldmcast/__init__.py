"""Joint base-station clustering and beamforming for layered multicast/unicast."""

__version__ = "0.1.0"
