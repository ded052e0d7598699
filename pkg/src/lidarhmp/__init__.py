"""Point-cloud human motion prediction on synthetic LiDAR scans, in pure numpy."""
__version__ = "0.1.0"
