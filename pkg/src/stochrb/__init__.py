"""Certified MC and stochastic Galerkin reduced basis models for a random-reactivity elliptic PDE."""
