"""Adaptive trust-region radius rules for Muon-type optimizers."""
