"""Data windows, training, checkpoints and evaluation."""
