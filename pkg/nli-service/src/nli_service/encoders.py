"""Frozen text-pair encoders.

An encoder turns (premise, hypothesis) pairs into fixed-size feature
vectors; it is never updated by training. The premise is the candidate
requirement text (with its justification) and the hypothesis is the change
rationale.
"""

from __future__ import annotations

import hashlib
import re

import numpy as np

_TOKEN = re.compile(r"[a-z0-9]+")


def _hashed_bow(tokens, dim: int) -> np.ndarray:
    vec = np.zeros(dim)
    for token in tokens:
        h = int.from_bytes(
            hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest(), "big"
        )
        vec[h % dim] += 1.0 if (h >> 60) & 1 else -1.0
    norm = np.linalg.norm(vec)
    return vec / norm if norm else vec


class HashEncoder:
    """Deterministic hashed bag-of-tokens features for a text pair.

    Three blocks: premise tokens, hypothesis tokens, and their shared
    tokens. No semantics beyond token overlap; exists so the service
    contract can be exercised without model weights.
    """

    name = "hash"

    def __init__(self, dim: int = 256):
        self.dim = dim

    @property
    def feature_size(self) -> int:
        return 3 * self.dim

    def encode(self, pairs: list[tuple[str, str]]) -> np.ndarray:
        out = np.zeros((len(pairs), self.feature_size))
        for i, (premise, hypothesis) in enumerate(pairs):
            p_tokens = _TOKEN.findall(premise.lower())
            h_tokens = _TOKEN.findall(hypothesis.lower())
            shared = set(p_tokens) & set(h_tokens)
            out[i, : self.dim] = _hashed_bow(p_tokens, self.dim)
            out[i, self.dim : 2 * self.dim] = _hashed_bow(h_tokens, self.dim)
            out[i, 2 * self.dim :] = _hashed_bow(sorted(shared), self.dim)
        return out


class TransformerEncoder:
    """Pooled hidden states of a pretrained NLI encoder (weights frozen).

    Loads lazily; the base model must already be cached locally. The
    default follows the published setup (roberta-large-mnli).
    """

    name = "transformer"

    def __init__(self, model_name: str = "roberta-large-mnli", max_length: int = 256):
        self.model_name = model_name
        self.max_length = max_length
        self._tokenizer = None
        self._model = None

    def _load(self):
        if self._model is None:
            import torch  # noqa: F401
            from transformers import AutoModel, AutoTokenizer

            self._tokenizer = AutoTokenizer.from_pretrained(self.model_name)
            self._model = AutoModel.from_pretrained(self.model_name)
            self._model.eval()
            for param in self._model.parameters():
                param.requires_grad_(False)

    @property
    def feature_size(self) -> int:
        self._load()
        return int(self._model.config.hidden_size)

    def encode(self, pairs: list[tuple[str, str]]) -> np.ndarray:
        import torch

        self._load()
        premises = [p for p, _ in pairs]
        hypotheses = [h for _, h in pairs]
        batch = self._tokenizer(
            premises,
            hypotheses,
            padding=True,
            truncation=True,
            max_length=self.max_length,
            return_tensors="pt",
        )
        with torch.no_grad():
            hidden = self._model(**batch).last_hidden_state
        return hidden[:, 0, :].numpy().astype(float)


def make_encoder(kind: str, **kwargs):
    if kind == "hash":
        return HashEncoder(**kwargs)
    if kind == "transformer":
        return TransformerEncoder(**kwargs)
    raise ValueError(f"unknown encoder {kind!r}")
