"""Record schemas."""
