"""Stochastic process-algebra performance evaluation: parse population
models, solve them as CTMCs, mean-field ODEs or by simulation, and compute
throughput, utilisation, response time and scalability."""

__version__ = "0.1.0"
