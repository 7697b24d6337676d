"""Prompt variants and rendering.

Prompts are assembled from seven numbered detail texts: 1 is a role persona,
2 is the core impact-analysis directive (mandatory in every prompt), 3 and 4
are optional instructions (commonsense knowledge, keyword semantic
relations), and 5 to 7 are optional context blocks (task description, change
rationale description, dataset domain). Including or excluding each optional
detail yields 64 variants, P1 to P64.

Template wording ships as versioned text files under ``templates/`` so that
rendering is reproducible byte-for-byte; the texts are faithful paraphrases
of the published descriptions, not verbatim reproductions.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from importlib import resources
from itertools import combinations
from pathlib import Path

from reqimpact.corpus import ChangeRationale, Requirement

MANDATORY_DETAIL = 2
OPTIONAL_DETAILS = (1, 3, 4, 5, 6, 7)
ALL_DETAILS = (1, 2, 3, 4, 5, 6, 7)

# Line pattern the model is instructed to emit; the parser in reqimpact.llm
# depends on it.
OUTPUT_PATTERN = "impacted ReqID: <ID> justification: <text>"


@dataclass(frozen=True)
class PromptSpec:
    """One of the 64 prompt variants: its canonical id and its detail set."""

    prompt_id: str
    details: frozenset[int]

    def describe(self) -> str:
        return ",".join(str(d) for d in sorted(self.details))


def enumerate_prompts() -> list[PromptSpec]:
    """All 64 prompt variants in canonical order.

    Subsets of the optional details are ordered by cardinality, then
    lexicographically by detail number; each subset is unioned with the
    mandatory detail 2 and assigned ids P1..P64 in that order.
    """
    specs: list[PromptSpec] = []
    position = 0
    for size in range(len(OPTIONAL_DETAILS) + 1):
        for combo in combinations(OPTIONAL_DETAILS, size):
            position += 1
            details = frozenset(combo) | {MANDATORY_DETAIL}
            specs.append(PromptSpec(prompt_id=f"P{position}", details=details))
    return specs


def prompt_by_id(prompt_id: str) -> PromptSpec:
    for spec in enumerate_prompts():
        if spec.prompt_id == prompt_id:
            return spec
    raise KeyError(f"unknown prompt id {prompt_id!r} (expected P1..P64)")


@dataclass(frozen=True)
class DetailTextCatalog:
    """Detail templates plus the output-format directive and domain string."""

    details: dict[int, str]
    output_format: str
    ranking_template: str
    cot_template: str
    domain: str = ""

    def __post_init__(self):
        missing = [d for d in ALL_DETAILS if d not in self.details]
        if missing:
            raise ValueError(f"catalog is missing detail templates: {missing}")
        if OUTPUT_PATTERN not in self.details[MANDATORY_DETAIL]:
            raise ValueError(
                "detail 2 template must state the output format "
                f"({OUTPUT_PATTERN!r})"
            )

    def with_domain(self, domain: str) -> "DetailTextCatalog":
        return replace(self, domain=domain)

    def detail_text(self, detail: int) -> str:
        text = self.details[detail]
        if detail == 7:
            text = text.replace("{domain}", self.domain)
        return text


def _read_templates(read) -> DetailTextCatalog:
    details = {d: read(f"detail_{d}.txt").strip() for d in ALL_DETAILS}
    return DetailTextCatalog(
        details=details,
        output_format=read("output_format.txt").strip(),
        ranking_template=read("ranking.txt").strip(),
        cot_template=read("cot_pair.txt").strip(),
    )


def load_catalog(templates_dir: str | Path | None = None, domain: str = "") -> DetailTextCatalog:
    """Load the catalog from ``templates_dir`` or the packaged templates."""
    if templates_dir is None:
        root = resources.files("reqimpact").joinpath("templates")
        catalog = _read_templates(lambda name: root.joinpath(name).read_text("utf-8"))
    else:
        base = Path(templates_dir)
        catalog = _read_templates(lambda name: (base / name).read_text("utf-8"))
    return catalog.with_domain(domain)


def _selection_body(
    spec: PromptSpec,
    rationale: ChangeRationale,
    reqs: list[Requirement] | tuple[Requirement, ...],
    catalog: DetailTextCatalog,
) -> str:
    sections = [catalog.detail_text(d) for d in ALL_DETAILS if d in spec.details]
    sections.append(f"Change Rationale: {rationale.text}")
    listing = "\n".join(f"{r.id}: {r.text}" for r in reqs)
    sections.append(f"Requirements List:\n{listing}")
    sections.append(catalog.output_format)
    return "\n".join(sections)


def render_cag_prompt(
    spec: PromptSpec,
    rationale: ChangeRationale,
    reqs: list[Requirement] | tuple[Requirement, ...],
    catalog: DetailTextCatalog,
) -> str:
    """Render the full-context selection prompt over the whole corpus."""
    if not reqs:
        raise ValueError("empty requirement list")
    return _selection_body(spec, rationale, reqs, catalog)


def render_refinement_prompt(
    spec: PromptSpec,
    rationale: ChangeRationale,
    complement_reqs: list[Requirement] | tuple[Requirement, ...],
    catalog: DetailTextCatalog,
) -> str:
    """Render the second-pass prompt over the not-yet-selected requirements."""
    if not complement_reqs:
        raise ValueError("nothing to refine: complement is empty")
    return _selection_body(spec, rationale, complement_reqs, catalog)


def flatten_line(text: str) -> str:
    """Collapse all whitespace runs (including newlines) to single spaces."""
    return " ".join(text.split())


def render_ranking_prompt(rationale: ChangeRationale, candidates, catalog: DetailTextCatalog) -> str:
    """Render the ranking prompt over an impact set with justifications.

    ``candidates`` is an iterable of objects with ``req_id`` and
    ``justification`` attributes. Justifications are flattened to one line
    each so the line-oriented answer stays parseable.
    """
    items = list(candidates)
    if not items:
        raise ValueError("empty candidate set")
    req_ids = ", ".join(c.req_id for c in items)
    justifications = "\n".join(
        f"{c.req_id}: {flatten_line(c.justification)}" for c in items
    )
    return (
        catalog.ranking_template.replace("{rationale}", flatten_line(rationale.text))
        .replace("{req_ids}", req_ids)
        .replace("{justifications}", justifications)
    )


def render_cot_pair_prompt(
    rationale: ChangeRationale, requirement: Requirement, catalog: DetailTextCatalog
) -> str:
    """Render the yes/no pair prompt used by the retrieve-then-classify baseline."""
    return catalog.cot_template.replace("{rationale}", rationale.text).replace(
        "{requirement}", f"{requirement.id}: {requirement.text}"
    )
