"""Comparison systems: embedding similarity with cutoffs, iterative
per-requirement prompting, and retrieve-then-classify with a yes/no prompt.

The similarity baseline embeds the change rationale and every requirement,
ranks requirements by cosine similarity, and applies one of three cutoff
strategies: a fixed threshold (T1), the last significant peak of the
consecutive-difference chart (T2), or the single largest drop (T3).
"""

from __future__ import annotations

import hashlib
import os
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import requests

from reqimpact.corpus import ChangeRationale, Dataset
from reqimpact.llm import (
    BackendError,
    ChatParams,
    ChatRequest,
    complete,
    parse_impact_output,
)
from reqimpact.pipeline import ImpactCandidate, ImpactSet
from reqimpact.prompts import (
    DetailTextCatalog,
    PromptSpec,
    render_cag_prompt,
    render_cot_pair_prompt,
)

_TOKEN = re.compile(r"[a-z0-9]+")


@dataclass(frozen=True)
class SimilarityRanking:
    """Requirements with scores, sorted descending; ties keep dataset order."""

    entries: tuple[tuple[str, float], ...]

    def __len__(self) -> int:
        return len(self.entries)

    def ids(self) -> list[str]:
        return [req_id for req_id, _ in self.entries]

    def scores(self) -> list[float]:
        return [score for _, score in self.entries]


class HashingEmbedder:
    """Deterministic feature-hashed bag-of-tokens embedder, unit-normalized.

    A stand-in for remote embedding models in tests and offline runs; the
    geometry reflects token overlap only, not meaning.
    """

    def __init__(self, dim: int = 256):
        if dim < 2:
            raise ValueError("dim must be at least 2")
        self.dim = dim

    def embed(self, texts: list[str]) -> list[np.ndarray]:
        return [self._embed_one(text) for text in texts]

    def _embed_one(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dim)
        for token in _TOKEN.findall(text.lower()):
            h = int.from_bytes(
                hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest(), "big"
            )
            sign = 1.0 if (h >> 60) & 1 else -1.0
            vec[h % self.dim] += sign
        norm = np.linalg.norm(vec)
        if norm == 0.0:
            vec[0] = 1.0
            return vec
        return vec / norm


class HttpEmbeddingBackend:
    """POSTs texts to an embeddings endpoint (model + input array in, vectors out)."""

    def __init__(
        self,
        endpoint: str,
        model: str,
        credential_env: str = "EMBEDDING_API_KEY",
        timeout_s: float = 120.0,
        session: requests.Session | None = None,
    ):
        self.endpoint = endpoint
        self.model = model
        self.credential_env = credential_env
        self.timeout_s = timeout_s
        self.session = session or requests.Session()

    def embed(self, texts: list[str]) -> list[np.ndarray]:
        headers = {"Content-Type": "application/json"}
        credential = os.environ.get(self.credential_env, "")
        if credential:
            headers["Authorization"] = f"Bearer {credential}"
        try:
            resp = self.session.post(
                self.endpoint,
                json={"model": self.model, "input": list(texts)},
                headers=headers,
                timeout=self.timeout_s,
            )
        except requests.RequestException as exc:
            raise BackendError(f"transport failure: {exc}", transient=True) from exc
        if resp.status_code == 429 or resp.status_code >= 500:
            raise BackendError(f"backend returned {resp.status_code}", transient=True)
        if resp.status_code != 200:
            raise BackendError(
                f"backend returned {resp.status_code}: {resp.text[:200]}",
                transient=False,
            )
        doc = resp.json()
        return [np.asarray(item["embedding"], dtype=float) for item in doc["data"]]


def embed(texts: list[str], backend) -> list[np.ndarray]:
    """One vector per text, order-preserving."""
    if not texts:
        return []
    vectors = backend.embed(list(texts))
    if len(vectors) != len(texts):
        raise BackendError("embedding backend returned wrong vector count")
    return vectors


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine of a zero vector is undefined")
    return float(np.dot(a, b) / (na * nb))


def rank_by_similarity(
    rationale: ChangeRationale, dataset: Dataset, backend
) -> SimilarityRanking:
    """Cosine scores of the rationale against every requirement, sorted."""
    if dataset.n_req == 0:
        raise ValueError("dataset has no requirements")
    vectors = embed(
        [rationale.text] + [r.text for r in dataset.requirements], backend
    )
    query, req_vectors = vectors[0], vectors[1:]
    scored = [
        (req.id, cosine(query, vec))
        for req, vec in zip(dataset.requirements, req_vectors)
    ]
    # sorted() is stable, so equal scores keep dataset order
    scored.sort(key=lambda item: -item[1])
    return SimilarityRanking(entries=tuple(scored))


@dataclass(frozen=True)
class CutoffChoice:
    """A cutoff strategy name plus the threshold t1 needs."""

    strategy: str
    theta: float = 0.5

    def __post_init__(self):
        if self.strategy not in ("t1", "t2", "t3"):
            raise ValueError(f"unknown cutoff strategy {self.strategy!r}")
        if self.strategy == "t1" and not 0.0 <= self.theta <= 1.0:
            raise ValueError("theta must be in [0, 1]")

    def apply(self, ranking: "SimilarityRanking") -> set[str]:
        if self.strategy == "t1":
            return cutoff_t1(ranking, self.theta)
        if self.strategy == "t2":
            return cutoff_t2(ranking)
        return cutoff_t3(ranking)


def cutoff_t1(ranking: SimilarityRanking, theta: float = 0.5) -> set[str]:
    """Keep every requirement whose score strictly exceeds the threshold."""
    if not 0.0 <= theta <= 1.0:
        raise ValueError("theta must be in [0, 1]")
    return {req_id for req_id, score in ranking.entries if score > theta}


def _diffs(ranking: SimilarityRanking) -> list[float]:
    if len(ranking) < 2:
        raise ValueError("cutoff needs at least 2 ranked items")
    scores = ranking.scores()
    return [scores[i] - scores[i + 1] for i in range(len(scores) - 1)]


def cutoff_t2(ranking: SimilarityRanking) -> set[str]:
    """Cut after the last significant drop in the consecutive-difference chart.

    A drop is significant when it exceeds one third of the largest drop; the
    kept set is the prefix ending at the item on the left of the last
    significant drop. With all scores equal there is no significant drop and
    nothing is kept.
    """
    diffs = _diffs(ranking)
    threshold = max(diffs) / 3.0
    last_significant = None
    for i, d in enumerate(diffs):
        if d > threshold:
            last_significant = i
    if last_significant is None:
        return set()
    return set(ranking.ids()[: last_significant + 1])


def cutoff_t3(ranking: SimilarityRanking) -> set[str]:
    """Cut at the single largest drop (first occurrence on ties)."""
    diffs = _diffs(ranking)
    largest = max(range(len(diffs)), key=lambda i: (diffs[i], -i))
    return set(ranking.ids()[: largest + 1])


def iterative_baseline(
    rationale: ChangeRationale,
    dataset: Dataset,
    spec: PromptSpec,
    catalog: DetailTextCatalog,
    backend,
    model: str,
    params: ChatParams | None = None,
    max_workers: int = 1,
    trace: list | None = None,
) -> ImpactSet:
    """Ask the selection prompt once per requirement (singleton list each)."""
    if dataset.n_req == 0:
        raise ValueError("dataset has no requirements")
    params = params or ChatParams()

    def ask(req) -> list[tuple[str, str]]:
        prompt = render_cag_prompt(spec, rationale, [req], catalog)
        response = complete(ChatRequest(prompt=prompt, model=model, params=params), backend)
        found, _ = parse_impact_output(response.text, {req.id})
        if trace is not None:
            trace.append((prompt, response.text))
        return found

    results: list[list[tuple[str, str]]] = []
    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            results = list(pool.map(ask, dataset.requirements))
    else:
        results = [ask(req) for req in dataset.requirements]

    candidates = []
    seen: set[str] = set()
    for found in results:
        for req_id, justification in found:
            if req_id not in seen:
                seen.add(req_id)
                candidates.append(
                    ImpactCandidate(req_id=req_id, justification=justification, origin="initial")
                )
    return ImpactSet(candidates=tuple(candidates))


_YES = re.compile(r"\byes\b", re.IGNORECASE)


def cot_baseline(
    rationale: ChangeRationale,
    dataset: Dataset,
    k: int,
    embedding_backend,
    chat_backend,
    catalog: DetailTextCatalog,
    model: str,
    params: ChatParams | None = None,
    max_workers: int = 1,
    trace: list | None = None,
) -> ImpactSet:
    """Retrieve top-k by similarity, then ask a yes/no question per pair."""
    if not 1 <= k <= dataset.n_req:
        raise ValueError(f"k must be in [1, {dataset.n_req}]")
    params = params or ChatParams()
    ranking = rank_by_similarity(rationale, dataset, embedding_backend)
    top_ids = ranking.ids()[:k]

    def ask(req_id: str) -> tuple[str, bool]:
        req = dataset.requirement(req_id)
        prompt = render_cot_pair_prompt(rationale, req, catalog)
        response = complete(ChatRequest(prompt=prompt, model=model, params=params), chat_backend)
        if trace is not None:
            trace.append((prompt, response.text))
        return req_id, bool(_YES.search(response.text))

    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            answers = list(pool.map(ask, top_ids))
    else:
        answers = [ask(req_id) for req_id in top_ids]

    candidates = tuple(
        ImpactCandidate(req_id=req_id, justification="retrieve-then-classify: yes", origin="initial")
        for req_id, positive in answers
        if positive
    )
    return ImpactSet(candidates=candidates)


def cot_grid_search(
    dataset: Dataset,
    grid: list[int],
    embedding_backend,
    chat_backend,
    catalog: DetailTextCatalog,
    model: str,
    params: ChatParams | None = None,
) -> tuple[int, float]:
    """Pick the k in ``grid`` with the best F2 against gold (micro, ties → smaller k)."""
    from reqimpact.metrics import confusion, prf2, ConfusionCounts

    if not grid:
        raise ValueError("empty k grid")
    if dataset.gold is None:
        raise ValueError("grid search needs gold impact sets")
    best: tuple[float, int] | None = None
    for k in sorted(grid):
        tp = fp = fn = 0
        for rationale in dataset.rationales:
            result = cot_baseline(
                rationale, dataset, k, embedding_backend, chat_backend, catalog, model, params
            )
            c = confusion(result.ids(), dataset.gold_for(rationale.id), rationale.id)
            tp, fp, fn = tp + c.tp, fp + c.fp, fn + c.fn
        _, _, f2 = prf2(ConfusionCounts(rationale_id="<grid>", tp=tp, fp=fp, fn=fn))
        if best is None or f2 > best[0]:
            best = (f2, k)
    return best[1], best[0]
