"""Datasets, metrics, checkpoints, training and evaluation."""
