"""Benchmark harness: dataset readers, metrics, experiments and the CLI."""
