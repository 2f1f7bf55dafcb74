"""Synthetic ID, OOD and Nonsense datasets."""
