"""Joint object matching: LP relaxations, consistency cuts and recovery analysis."""
__version__ = "0.1.0"
