"""Autodiff tensors, gradient checks and attention mechanisms."""
