"""Gradient-based floating centroid classifiers."""
