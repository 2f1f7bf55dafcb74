"""Training, evaluation and abstention."""
