"""Binary entailment labels for the selection step.

A label of 1 means the candidate requirement (its text plus the model's
justification) entails the change rationale; 0 means it does not. Labels
come either from a remote inference service (fine-tuned per fold) or from a
deterministic lexical fallback that needs no model at all. The fallback
keeps the whole pipeline runnable offline; it makes no claim to the quality
of a fine-tuned language model.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import requests

from reqimpact.corpus import Dataset
from reqimpact.llm import BackendError

_TOKEN = re.compile(r"[a-z0-9]+")

# Small function-word list; kept short on purpose so that domain terms
# always survive tokenization.
STOPWORDS = frozenset(
    """a an and are as at be by for from in is it its of on or shall should
    that the this to was were will with must""".split()
)


@dataclass(frozen=True)
class EntailmentPair:
    """Premise is the candidate text, hypothesis is the rationale."""

    rationale_text: str
    candidate_text: str

    def __post_init__(self):
        if not self.rationale_text.strip() or not self.candidate_text.strip():
            raise ValueError("entailment pair texts must be non-empty")


def make_pair(rationale_text: str, requirement_text: str, justification: str) -> EntailmentPair:
    """Candidate text is the requirement followed by its justification."""
    candidate = requirement_text if not justification else f"{requirement_text} {justification}"
    return EntailmentPair(rationale_text=rationale_text, candidate_text=candidate)


def content_tokens(text: str, stopwords: frozenset[str] = STOPWORDS) -> set[str]:
    return {t for t in _TOKEN.findall(text.lower()) if t not in stopwords}


class LexicalEntailment:
    """Label 1 when the candidate covers enough of the rationale's tokens.

    The score is the fraction of the rationale's content tokens that also
    appear in the candidate text. Entailment is directional, so coverage of
    the hypothesis is measured rather than symmetric overlap. A rationale
    with no content tokens is vacuously entailed.
    """

    def __init__(self, threshold: float = 0.2, stopwords: frozenset[str] = STOPWORDS):
        if not 0.0 <= threshold <= 1.0:
            raise ValueError("threshold must be in [0, 1]")
        self.threshold = threshold
        self.stopwords = stopwords

    def score(self, pair: EntailmentPair) -> float:
        hypothesis = content_tokens(pair.rationale_text, self.stopwords)
        if not hypothesis:
            return 1.0
        premise = content_tokens(pair.candidate_text, self.stopwords)
        return len(premise & hypothesis) / len(hypothesis)

    def predict(self, pairs: list[EntailmentPair]) -> list[int]:
        return [1 if self.score(p) >= self.threshold else 0 for p in pairs]


class NliServiceClient:
    """Client of the entailment microservice (POST /train, POST /predict)."""

    def __init__(
        self,
        base_url: str,
        token: str | None = None,
        timeout_s: float = 600.0,
        session: requests.Session | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.token = token
        self.timeout_s = timeout_s
        self.session = session or requests.Session()

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.token:
            headers["X-Auth-Token"] = self.token
        return headers

    def _post(self, path: str, payload: dict) -> dict:
        try:
            resp = self.session.post(
                f"{self.base_url}{path}",
                json=payload,
                headers=self._headers(),
                timeout=self.timeout_s,
            )
        except requests.RequestException as exc:
            raise BackendError(f"entailment service transport failure: {exc}", transient=True)
        if resp.status_code != 200:
            raise BackendError(
                f"entailment service returned {resp.status_code}: {resp.text[:200]}",
                transient=resp.status_code == 429 or resp.status_code >= 500,
            )
        return resp.json()

    def health(self) -> dict:
        try:
            resp = self.session.get(f"{self.base_url}/health", timeout=self.timeout_s)
        except requests.RequestException as exc:
            raise BackendError(f"entailment service transport failure: {exc}", transient=True)
        if resp.status_code != 200:
            raise BackendError(f"entailment service returned {resp.status_code}")
        return resp.json()

    def train(self, examples: list[dict], hyperparams: dict | None = None) -> str:
        payload: dict = {"examples": examples}
        if hyperparams:
            payload["hyperparams"] = hyperparams
        return self._post("/train", payload)["model_id"]

    def predict_with_model(self, model_id: str, pairs: list[EntailmentPair]) -> list[int]:
        payload = {
            "model_id": model_id,
            "pairs": [
                {"rationale_text": p.rationale_text, "candidate_text": p.candidate_text}
                for p in pairs
            ],
        }
        return list(self._post("/predict", payload)["labels"])


class RemoteEntailment:
    """Prediction-only backend bound to an already-trained remote model."""

    def __init__(self, client: NliServiceClient, model_id: str):
        self.client = client
        self.model_id = model_id

    def predict(self, pairs: list[EntailmentPair]) -> list[int]:
        return self.client.predict_with_model(self.model_id, pairs)


def predict(pairs: list[EntailmentPair], backend) -> list[int]:
    """One binary label per pair, order-preserving."""
    if not pairs:
        return []
    labels = list(backend.predict(list(pairs)))
    if len(labels) != len(pairs):
        raise BackendError("entailment backend returned wrong label count")
    bad = [l for l in labels if l not in (0, 1)]
    if bad:
        raise BackendError(f"entailment backend returned non-binary labels: {bad[:3]}")
    return labels


@dataclass(frozen=True)
class LooFold:
    """One leave-one-out fold: train on every other rationale's candidates."""

    held_out_id: str
    train: tuple[tuple[EntailmentPair, int], ...]
    test: tuple[tuple[str, EntailmentPair], ...]


def build_loo_folds(dataset: Dataset, refined_sets: dict, gold=None) -> list[LooFold]:
    """One fold per change rationale.

    ``refined_sets`` maps rationale id to the ImpactSet produced by the
    refinement stage. Train pairs come from all other rationales' candidates,
    labeled 1 exactly when the candidate belongs to that rationale's gold
    set; test pairs are the held-out rationale's candidates.
    """
    gold_entries = gold if gold is not None else dataset.gold
    if gold_entries is None:
        raise ValueError("leave-one-out folds need gold impact sets")
    gold_by_rationale = {g.rationale_id: g.impacted_ids for g in gold_entries}
    missing = [c.id for c in dataset.rationales if c.id not in refined_sets]
    if missing:
        raise ValueError(f"missing refined sets for rationales: {missing}")

    def pairs_for(rationale_id: str) -> list[tuple[str, EntailmentPair, int]]:
        rationale = dataset.rationale(rationale_id)
        gold_ids = gold_by_rationale.get(rationale_id, frozenset())
        out = []
        for cand in refined_sets[rationale_id]:
            req = dataset.requirement(cand.req_id)
            pair = make_pair(rationale.text, req.text, cand.justification)
            out.append((cand.req_id, pair, 1 if cand.req_id in gold_ids else 0))
        return out

    by_rationale = {c.id: pairs_for(c.id) for c in dataset.rationales}
    folds = []
    for held_out in dataset.rationales:
        train = tuple(
            (pair, label)
            for other in dataset.rationales
            if other.id != held_out.id
            for _, pair, label in by_rationale[other.id]
        )
        test = tuple((req_id, pair) for req_id, pair, _ in by_rationale[held_out.id])
        folds.append(LooFold(held_out_id=held_out.id, train=train, test=test))
    return folds


def run_loo(
    folds: list[LooFold], client: NliServiceClient, hyperparams: dict | None = None
) -> dict[tuple[str, str], int]:
    """Train a fresh remote model per fold and label its held-out pairs.

    Folds with no test pairs are skipped entirely (nothing to label, so no
    train call either). Folds run sequentially: every train call mutates
    remote model state.
    """
    labels: dict[tuple[str, str], int] = {}
    for fold in folds:
        if not fold.test:
            continue
        examples = [
            {
                "rationale_text": pair.rationale_text,
                "candidate_text": pair.candidate_text,
                "label": label,
            }
            for pair, label in fold.train
        ]
        try:
            model_id = client.train(examples, hyperparams)
            predicted = client.predict_with_model(model_id, [pair for _, pair in fold.test])
        except BackendError as exc:
            raise BackendError(f"fold {fold.held_out_id}: {exc}", transient=exc.transient)
        if len(predicted) != len(fold.test):
            raise BackendError(f"fold {fold.held_out_id}: wrong label count")
        for (req_id, _), label in zip(fold.test, predicted):
            labels[(fold.held_out_id, req_id)] = label
    return labels
