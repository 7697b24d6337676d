"""Entailment microservice: train a fresh binary head per call, then predict.

Every train call starts from pristine weights over a frozen text encoder, so
earlier calls can never leak into later evaluations. The encoder is
pluggable: a pretrained NLI transformer for production and a deterministic
hashed-feature encoder for offline tests.
"""

from nli_service.app import create_app

__all__ = ["create_app"]
