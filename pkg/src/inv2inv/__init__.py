"""Energy-guided two-stage reverse-SDE sampling for sketch-to-photo synthesis."""

__version__ = "0.1.0"
