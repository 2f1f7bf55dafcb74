"""FLOP counting and timing benchmarks."""
