"""optbench: unit-test style benchmarks for stochastic optimizers."""

__version__ = "0.1.0"
