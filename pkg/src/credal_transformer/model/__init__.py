"""Encoder classifier and checkpoints."""
