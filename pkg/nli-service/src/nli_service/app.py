"""HTTP surface: GET /health, POST /train, POST /predict.

Train calls are serialized by a lock (single-accelerator assumption) and
each one fits a fresh head, so predictions after a train call are
independent of any earlier call. Trained models live in an in-memory LRU
registry keyed by opaque model ids; evicted or unknown ids yield 404.
"""

from __future__ import annotations

import logging
import os
import threading
import time
import uuid
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np
from fastapi import Depends, FastAPI, HTTPException, Request
from pydantic import BaseModel, Field

from nli_service.encoders import make_encoder
from nli_service.head import Hyperparams, TrainedHead, train_head

logger = logging.getLogger("nli_service")


class TrainExample(BaseModel):
    rationale_text: str
    candidate_text: str
    label: int


class HyperparamsBody(BaseModel):
    epochs: int = 100
    weight_decay: float = 1e-3
    train_batch: int = Field(default=10, gt=0)
    learning_rate: float = 2e-2
    best_metric: str = "recall"
    seed: int = 42


class TrainBody(BaseModel):
    examples: list[TrainExample]
    hyperparams: HyperparamsBody = Field(default_factory=HyperparamsBody)


class PairBody(BaseModel):
    rationale_text: str
    candidate_text: str


class PredictBody(BaseModel):
    model_id: str
    pairs: list[PairBody]


@dataclass
class ModelHandle:
    """A trained head plus bookkeeping: creation time and the hyperparams
    it was trained with."""

    head: TrainedHead
    created_at: float
    hyperparams: dict


class ModelRegistry:
    """LRU store of trained models; oldest entry evicted past the cap."""

    def __init__(self, cap: int):
        self.cap = cap
        self._models: OrderedDict[str, ModelHandle] = OrderedDict()
        self._lock = threading.Lock()

    def put(self, head: TrainedHead, hyperparams: dict) -> str:
        model_id = uuid.uuid4().hex
        handle = ModelHandle(head=head, created_at=time.time(), hyperparams=hyperparams)
        with self._lock:
            self._models[model_id] = handle
            while len(self._models) > self.cap:
                evicted, _ = self._models.popitem(last=False)
                logger.info("evicted model %s", evicted)
        return model_id

    def get(self, model_id: str) -> ModelHandle | None:
        with self._lock:
            handle = self._models.get(model_id)
            if handle is not None:
                self._models.move_to_end(model_id)
            return handle


def create_app(encoder=None, model_cap: int | None = None, shared_token: str | None = None) -> FastAPI:
    """Build the service; arguments override the corresponding env vars
    (NLI_ENCODER, NLI_MODEL_CACHE, NLI_SHARED_TOKEN)."""
    if encoder is None:
        kind = os.environ.get("NLI_ENCODER", "transformer")
        if kind == "transformer":
            encoder = make_encoder(
                "transformer",
                model_name=os.environ.get("NLI_BASE_MODEL", "roberta-large-mnli"),
            )
        else:
            encoder = make_encoder(kind)
    if model_cap is None:
        model_cap = int(os.environ.get("NLI_MODEL_CACHE", "16"))
    if shared_token is None:
        shared_token = os.environ.get("NLI_SHARED_TOKEN", "")

    app = FastAPI(title="nli-service")
    registry = ModelRegistry(cap=model_cap)
    train_lock = threading.Lock()

    def check_token(request: Request) -> None:
        if shared_token and request.headers.get("X-Auth-Token") != shared_token:
            raise HTTPException(status_code=401, detail="missing or wrong auth token")

    @app.get("/health")
    def health():
        return {"status": "ok", "encoder": getattr(encoder, "name", "custom")}

    @app.post("/train", dependencies=[Depends(check_token)])
    def train(body: TrainBody):
        if not body.examples:
            raise HTTPException(status_code=400, detail="examples must be non-empty")
        labels = np.array([ex.label for ex in body.examples], dtype=float)
        if not set(np.unique(labels)) <= {0.0, 1.0}:
            raise HTTPException(status_code=400, detail="labels must be 0 or 1")
        for value in (0.0, 1.0):
            if value not in labels:
                logger.warning("training set has no examples with label %d", int(value))
        pairs = [(ex.candidate_text, ex.rationale_text) for ex in body.examples]
        hp = Hyperparams(**body.hyperparams.model_dump())
        try:
            with train_lock:
                features = encoder.encode(pairs)
                head = train_head(features, labels, hp)
        except MemoryError:
            raise HTTPException(
                status_code=503,
                detail="out of memory during training",
                headers={"Retry-After": "30"},
            )
        return {"model_id": registry.put(head, body.hyperparams.model_dump())}

    @app.post("/predict", dependencies=[Depends(check_token)])
    def predict(body: PredictBody):
        handle = registry.get(body.model_id)
        if handle is None:
            raise HTTPException(status_code=404, detail=f"unknown model_id {body.model_id}")
        if not body.pairs:
            return {"labels": []}
        pairs = [(p.candidate_text, p.rationale_text) for p in body.pairs]
        features = encoder.encode(pairs)
        return {"labels": handle.head.predict(features)}

    return app


# default instance for `uvicorn nli_service.app:app`; encoders load lazily,
# so building it at import time is cheap
app = create_app()
