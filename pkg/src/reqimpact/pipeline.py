"""Four-stage impact-set construction for one change rationale.

Stage order: a full-context selection pass over every requirement, a
refinement pass over the complement of the first selection, an LLM ranking
pass, and an entailment-gated selection that prunes the ranked list. The
refinement pass exists because long-context models tend to under-attend to
mid-prompt content; giving the overlooked requirements a second, shorter
prompt recovers some of them. Ranking and selection run only when filtering
is enabled, since the selection rule consumes the ranked order.

Prompts whose estimated size exceeds the configured token budget are split
into batches; per-batch selections are unioned in first-seen order.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

from reqimpact import entailment as entailment_mod
from reqimpact.corpus import ChangeRationale, Dataset, Requirement
from reqimpact.llm import (
    ChatParams,
    ChatRequest,
    DEFAULT_MODEL,
    RankingParseError,
    complete,
    parse_impact_output,
    parse_ranking_output,
)
from reqimpact.prompts import (
    DetailTextCatalog,
    PromptSpec,
    prompt_by_id,
    render_cag_prompt,
    render_ranking_prompt,
    render_refinement_prompt,
)

ORIGIN_INITIAL = "initial"
ORIGIN_REFINEMENT = "refinement"


@dataclass(frozen=True)
class ImpactCandidate:
    req_id: str
    justification: str
    origin: str = ORIGIN_INITIAL

    def __post_init__(self):
        if self.origin not in (ORIGIN_INITIAL, ORIGIN_REFINEMENT):
            raise ValueError(f"unknown origin {self.origin!r}")


@dataclass(frozen=True)
class ImpactSet:
    """Ordered impact candidates; order is rank after the ranking stage."""

    candidates: tuple[ImpactCandidate, ...] = ()

    def __post_init__(self):
        ids = [c.req_id for c in self.candidates]
        if len(ids) != len(set(ids)):
            raise ValueError("duplicate requirement ids in impact set")

    def __len__(self) -> int:
        return len(self.candidates)

    def __iter__(self):
        return iter(self.candidates)

    def ids(self) -> list[str]:
        return [c.req_id for c in self.candidates]

    def id_set(self) -> frozenset[str]:
        return frozenset(c.req_id for c in self.candidates)


RANKING_FALLBACKS = ("retry", "input-order")


@dataclass(frozen=True)
class PipelineConfig:
    prompt_id: str = "P30"
    refinement_enabled: bool = True
    filtering_enabled: bool = True
    batch_token_budget: int = 100_000
    repetitions: int = 1
    ranking_fallback: str = "retry"
    model: str = DEFAULT_MODEL
    params: ChatParams = field(default_factory=ChatParams)

    def __post_init__(self):
        if self.batch_token_budget <= 0:
            raise ValueError("batch token budget must be positive")
        if self.repetitions < 1:
            raise ValueError("repetitions must be at least 1")
        if self.ranking_fallback not in RANKING_FALLBACKS:
            raise ValueError(f"unknown ranking fallback {self.ranking_fallback!r}")

    def spec(self) -> PromptSpec:
        return prompt_by_id(self.prompt_id)


@dataclass
class StageTrace:
    stage: str
    prompt: str
    response: str
    warnings: list[str] = field(default_factory=list)
    elapsed_s: float = 0.0


@dataclass
class RunTrace:
    """Everything needed to replay a run: prompts, raw responses, warnings."""

    stages: list[StageTrace] = field(default_factory=list)
    labels: list[int] | None = None

    def warnings(self) -> list[str]:
        return [w for stage in self.stages for w in stage.warnings]


def estimate_tokens(text: str) -> int:
    """Cheap length heuristic: about four characters per token."""
    return max(1, len(text) // 4)


def batch_requirements(
    reqs,
    spec: PromptSpec,
    rationale: ChangeRationale,
    catalog: DetailTextCatalog,
    budget_tokens: int,
) -> list[list[Requirement]]:
    """Greedy fill: keep appending requirements while the rendered prompt fits.

    Every batch holds at least one requirement even if that single prompt
    exceeds the budget (it cannot be split further).
    """
    batches: list[list[Requirement]] = []
    current: list[Requirement] = []
    for req in reqs:
        candidate = current + [req]
        text = render_cag_prompt(spec, rationale, candidate, catalog)
        if estimate_tokens(text) > budget_tokens and current:
            batches.append(current)
            current = [req]
        else:
            current = candidate
    if current:
        batches.append(current)
    return batches


def _selection_stage(
    stage_name: str,
    render,
    reqs,
    rationale: ChangeRationale,
    spec: PromptSpec,
    config: PipelineConfig,
    catalog: DetailTextCatalog,
    backend,
    trace: RunTrace | None,
    origin: str,
) -> list[ImpactCandidate]:
    """Run one selection stage (possibly batched), first-seen union."""
    batches = batch_requirements(reqs, spec, rationale, catalog, config.batch_token_budget)
    found: list[ImpactCandidate] = []
    seen: set[str] = set()
    for batch in batches:
        prompt = render(spec, rationale, batch, catalog)
        known = {r.id for r in batch}
        for _ in range(config.repetitions):
            started = time.monotonic()
            response = complete(
                ChatRequest(prompt=prompt, model=config.model, params=config.params),
                backend,
            )
            pairs, warnings = parse_impact_output(response.text, known)
            if trace is not None:
                trace.stages.append(
                    StageTrace(
                        stage=stage_name,
                        prompt=prompt,
                        response=response.text,
                        warnings=warnings,
                        elapsed_s=time.monotonic() - started,
                    )
                )
            for req_id, justification in pairs:
                if req_id not in seen:
                    seen.add(req_id)
                    found.append(
                        ImpactCandidate(
                            req_id=req_id, justification=justification, origin=origin
                        )
                    )
    return found


def initial_pass(
    rationale: ChangeRationale,
    dataset: Dataset,
    spec: PromptSpec,
    config: PipelineConfig,
    catalog: DetailTextCatalog,
    backend,
    trace: RunTrace | None = None,
) -> ImpactSet:
    """Full-context selection pass over the entire requirement list."""
    if dataset.n_req == 0:
        raise ValueError("dataset has no requirements")
    candidates = _selection_stage(
        "initial",
        render_cag_prompt,
        dataset.requirements,
        rationale,
        spec,
        config,
        catalog,
        backend,
        trace,
        ORIGIN_INITIAL,
    )
    return ImpactSet(candidates=tuple(candidates))


def refinement_pass(
    rationale: ChangeRationale,
    dataset: Dataset,
    first: ImpactSet,
    spec: PromptSpec,
    config: PipelineConfig,
    catalog: DetailTextCatalog,
    backend,
    trace: RunTrace | None = None,
) -> ImpactSet:
    """Re-run the selection prompt over the complement of the first pass.

    Returns the union of the first pass and the newly selected candidates;
    never removes a first-pass candidate. Skipped when the complement is
    empty.
    """
    selected = first.id_set()
    complement = [r for r in dataset.requirements if r.id not in selected]
    if not complement:
        return first
    new = _selection_stage(
        "refinement",
        render_refinement_prompt,
        complement,
        rationale,
        spec,
        config,
        catalog,
        backend,
        trace,
        ORIGIN_REFINEMENT,
    )
    merged = list(first.candidates)
    for cand in new:
        if cand.req_id not in selected:
            merged.append(cand)
    return ImpactSet(candidates=tuple(merged))


def rank(
    rationale: ChangeRationale,
    candidates: ImpactSet,
    config: PipelineConfig,
    catalog: DetailTextCatalog,
    backend,
    trace: RunTrace | None = None,
) -> ImpactSet:
    """Reorder the impact set by the model's confidence ranking.

    A single candidate needs no call. When the response has no parseable
    Sorted_List line the behavior follows ``config.ranking_fallback``:
    ``retry`` re-asks once and then raises; ``input-order`` keeps the
    discovery order.
    """
    if len(candidates) == 0:
        raise ValueError("cannot rank an empty impact set")
    if len(candidates) == 1:
        return candidates
    prompt = render_ranking_prompt(rationale, candidates, catalog)
    expected = candidates.ids()
    attempts = 2 if config.ranking_fallback == "retry" else 1
    last_error: RankingParseError | None = None
    for _ in range(attempts):
        started = time.monotonic()
        response = complete(
            ChatRequest(prompt=prompt, model=config.model, params=config.params), backend
        )
        try:
            order, warnings = parse_ranking_output(response.text, expected)
        except RankingParseError as exc:
            last_error = exc
            if trace is not None:
                trace.stages.append(
                    StageTrace(
                        stage="ranking",
                        prompt=prompt,
                        response=response.text,
                        warnings=[f"ranking parse failed: {exc}"],
                        elapsed_s=time.monotonic() - started,
                    )
                )
            continue
        if trace is not None:
            trace.stages.append(
                StageTrace(
                    stage="ranking",
                    prompt=prompt,
                    response=response.text,
                    warnings=warnings,
                    elapsed_s=time.monotonic() - started,
                )
            )
        by_id = {c.req_id: c for c in candidates}
        return ImpactSet(candidates=tuple(by_id[req_id] for req_id in order))
    if config.ranking_fallback == "input-order":
        return candidates
    raise last_error


def select(ranked: ImpactSet, labels: list[int]) -> ImpactSet:
    """Prune a ranked impact set with entailment labels.

    Lists of five or fewer are returned unchanged. Otherwise the candidate
    at 1-based position i is kept when its label is 1 or when i falls in the
    top half (floor of n/2); relative order is preserved.
    """
    if len(labels) != len(ranked):
        raise ValueError(
            f"labels length {len(labels)} != impact set length {len(ranked)}"
        )
    n = len(ranked)
    if n <= 5:
        return ranked
    half = n // 2
    kept = tuple(
        cand
        for i, (cand, label) in enumerate(zip(ranked.candidates, labels), start=1)
        if label == 1 or i <= half
    )
    return ImpactSet(candidates=kept)


def run(
    rationale: ChangeRationale,
    dataset: Dataset,
    config: PipelineConfig,
    catalog: DetailTextCatalog,
    llm_backend,
    entailment_backend=None,
) -> tuple[ImpactSet, RunTrace]:
    """Compose the stages for one change rationale and emit a full trace."""
    if config.filtering_enabled and entailment_backend is None:
        raise ValueError("filtering is enabled but no entailment backend given")
    spec = config.spec()
    trace = RunTrace()
    result = initial_pass(rationale, dataset, spec, config, catalog, llm_backend, trace)
    if config.refinement_enabled:
        result = refinement_pass(
            rationale, dataset, result, spec, config, catalog, llm_backend, trace
        )
    if config.filtering_enabled and len(result) > 0:
        ranked = rank(rationale, result, config, catalog, llm_backend, trace)
        pairs = [
            entailment_mod.make_pair(
                rationale.text, dataset.requirement(c.req_id).text, c.justification
            )
            for c in ranked
        ]
        labels = entailment_mod.predict(pairs, entailment_backend)
        trace.labels = labels
        result = select(ranked, labels)
    return result, trace


def impact_set_document(rationale_id: str, impact_set: ImpactSet) -> dict:
    return {
        "rationale_id": rationale_id,
        "candidates": [
            {
                "req_id": c.req_id,
                "justification": c.justification,
                "origin": c.origin,
                "rank": i,
            }
            for i, c in enumerate(impact_set.candidates, start=1)
        ],
    }


def write_run_artifacts(
    directory, rationale_id: str, impact_set: ImpactSet, trace: RunTrace
) -> Path:
    """Write the per-rationale artifact directory.

    Serialized artifacts are deterministic: wall-clock timings stay on the
    in-memory trace only, so re-running with the same replay store overwrites
    identical bytes.
    """
    out = Path(directory) / rationale_id
    out.mkdir(parents=True, exist_ok=True)
    impact_doc = impact_set_document(rationale_id, impact_set)
    (out / "impact_set.json").write_text(
        json.dumps(impact_doc, ensure_ascii=False, indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    trace_doc = {
        "rationale_id": rationale_id,
        "stages": [
            {
                "stage": s.stage,
                "prompt": s.prompt,
                "response": s.response,
                "warnings": s.warnings,
            }
            for s in trace.stages
        ],
        "labels": trace.labels,
    }
    (out / "trace.json").write_text(
        json.dumps(trace_doc, ensure_ascii=False, indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    warnings = trace.warnings()
    (out / "warnings.log").write_text(
        "".join(f"{w}\n" for w in warnings), encoding="utf-8"
    )
    return out
