"""Uncertainty-guided dual attention segmentation."""
