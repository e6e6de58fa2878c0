"""Delayed stochastic optimization: dual averaging / mirror descent with stale gradients."""
