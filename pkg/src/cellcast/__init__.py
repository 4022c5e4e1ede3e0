"""Prompt-conditioned cellular load forecasting with a cell on-off energy simulator.

The package covers the full desk-scale pipeline: CDR-style ingestion and
synthetic traffic, prompt rendering and tokenization, a BERT-mini-shaped
encoder with a pooled regression head, asymmetric-loss training driven by
operator preference phrases, reference baselines, and a co-located-pair
on-off power/throughput simulator, all wired through a CLI and a small
JSON service.
"""

__version__ = "0.1.0"
