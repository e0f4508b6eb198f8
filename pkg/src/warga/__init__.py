"""Wasserstein-regularized graph autoencoders with GAE/VGAE/ARGA/ARVGA baselines."""

__version__ = "0.1.0"
