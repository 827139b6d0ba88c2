"""Retrieval-grounded, tool-using multimodal agent for binary scientific
image classification, with baselines, an evaluation harness, and a
deployable classification service."""

__version__ = "0.1.0"
