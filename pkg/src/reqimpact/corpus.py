"""Datasets: requirements, change rationales, and gold impact sets.

A dataset is a single JSON document so that the corpus and its gold labels
stay atomically consistent. Requirement order in the file is significant: it
defines the order in which requirements are listed inside prompts.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

CATEGORIES = ("Addition", "Deletion", "Modification")


class DatasetParseError(ValueError):
    """The dataset file is not valid JSON or not shaped like a dataset."""


class DatasetValidationError(ValueError):
    """The dataset parsed but violates an invariant (names the offender)."""


@dataclass(frozen=True)
class Requirement:
    id: str
    text: str


@dataclass(frozen=True)
class ChangeRationale:
    id: str
    text: str
    category: str | None = None


@dataclass(frozen=True)
class GoldImpact:
    rationale_id: str
    impacted_ids: frozenset[str]


@dataclass(frozen=True)
class Dataset:
    """Immutable after load; safe to share across concurrent runs."""

    name: str
    requirements: tuple[Requirement, ...]
    rationales: tuple[ChangeRationale, ...]
    gold: tuple[GoldImpact, ...] | None = None

    @property
    def n_req(self) -> int:
        return len(self.requirements)

    @property
    def n_rationales(self) -> int:
        return len(self.rationales)

    def requirement_ids(self) -> list[str]:
        return [r.id for r in self.requirements]

    def requirement(self, req_id: str) -> Requirement:
        for r in self.requirements:
            if r.id == req_id:
                return r
        raise KeyError(req_id)

    def rationale(self, rationale_id: str) -> ChangeRationale:
        for c in self.rationales:
            if c.id == rationale_id:
                return c
        raise KeyError(rationale_id)

    def gold_for(self, rationale_id: str) -> frozenset[str]:
        if self.gold is None:
            raise DatasetValidationError("dataset has no gold impact sets")
        for g in self.gold:
            if g.rationale_id == rationale_id:
                return g.impacted_ids
        return frozenset()


@dataclass(frozen=True)
class GoldStats:
    impacted_count: int
    impacted_fraction: float

    @property
    def impacted_percent(self) -> float:
        return 100.0 * self.impacted_fraction


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise DatasetValidationError(message)


def _as_str(obj: dict, key: str, where: str) -> str:
    value = obj.get(key)
    if not isinstance(value, str):
        raise DatasetParseError(f"{where}: field {key!r} must be a string")
    return value


def dataset_from_dict(doc: dict, name_hint: str = "<memory>") -> Dataset:
    """Build and validate a Dataset from an already-parsed JSON object."""
    if not isinstance(doc, dict):
        raise DatasetParseError(f"{name_hint}: top level must be an object")
    name = doc.get("name")
    if not isinstance(name, str) or not name.strip():
        raise DatasetParseError(f"{name_hint}: missing dataset 'name'")

    raw_reqs = doc.get("requirements")
    if not isinstance(raw_reqs, list):
        raise DatasetParseError(f"{name_hint}: 'requirements' must be an array")
    requirements: list[Requirement] = []
    seen_req: set[str] = set()
    for i, item in enumerate(raw_reqs):
        if not isinstance(item, dict):
            raise DatasetParseError(f"requirement #{i + 1}: must be an object")
        rid = _as_str(item, "id", f"requirement #{i + 1}")
        text = _as_str(item, "text", f"requirement {rid}").strip()
        _require(bool(rid.strip()), f"requirement #{i + 1}: empty id")
        _require(rid not in seen_req, f"duplicate requirement id {rid}")
        _require(bool(text), f"requirement {rid}: empty text")
        seen_req.add(rid)
        requirements.append(Requirement(id=rid, text=text))

    raw_rats = doc.get("change_rationales")
    if not isinstance(raw_rats, list):
        raise DatasetParseError(f"{name_hint}: 'change_rationales' must be an array")
    rationales: list[ChangeRationale] = []
    seen_rat: set[str] = set()
    for i, item in enumerate(raw_rats):
        if not isinstance(item, dict):
            raise DatasetParseError(f"change rationale #{i + 1}: must be an object")
        cid = _as_str(item, "id", f"change rationale #{i + 1}")
        text = _as_str(item, "text", f"change rationale {cid}").strip()
        _require(bool(cid.strip()), f"change rationale #{i + 1}: empty id")
        _require(cid not in seen_rat, f"duplicate change rationale id {cid}")
        _require(bool(text), f"change rationale {cid}: empty text")
        category = item.get("category")
        if category is not None:
            _require(
                category in CATEGORIES,
                f"change rationale {cid}: unknown category {category!r}",
            )
        seen_rat.add(cid)
        rationales.append(ChangeRationale(id=cid, text=text, category=category))

    gold: tuple[GoldImpact, ...] | None = None
    raw_gold = doc.get("gold")
    if raw_gold is not None:
        if not isinstance(raw_gold, list):
            raise DatasetParseError(f"{name_hint}: 'gold' must be an array")
        entries: list[GoldImpact] = []
        seen_gold: set[str] = set()
        for i, item in enumerate(raw_gold):
            if not isinstance(item, dict):
                raise DatasetParseError(f"gold entry #{i + 1}: must be an object")
            rationale_id = _as_str(item, "rationale_id", f"gold entry #{i + 1}")
            _require(
                rationale_id in seen_rat,
                f"gold entry references unknown rationale {rationale_id}",
            )
            _require(
                rationale_id not in seen_gold,
                f"duplicate gold entry for rationale {rationale_id}",
            )
            seen_gold.add(rationale_id)
            ids = item.get("impacted_ids")
            if not isinstance(ids, list):
                raise DatasetParseError(
                    f"gold entry {rationale_id}: 'impacted_ids' must be an array"
                )
            for rid in ids:
                _require(
                    isinstance(rid, str) and rid in seen_req,
                    f"gold entry {rationale_id} references unknown requirement {rid}",
                )
            entries.append(
                GoldImpact(rationale_id=rationale_id, impacted_ids=frozenset(ids))
            )
        gold = tuple(entries)

    return Dataset(
        name=name,
        requirements=tuple(requirements),
        rationales=tuple(rationales),
        gold=gold,
    )


def load_dataset(path) -> Dataset:
    """Load and validate a dataset document from ``path``.

    Raises DatasetParseError for malformed files and DatasetValidationError
    for invariant violations; both messages name the offending record.
    """
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, UnicodeDecodeError) as exc:
        raise DatasetParseError(f"cannot read dataset {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DatasetParseError(f"malformed dataset {path}: {exc}") from exc
    return dataset_from_dict(doc, name_hint=str(path))


def dataset_to_dict(dataset: Dataset) -> dict:
    """Inverse of :func:`dataset_from_dict`; impacted ids are sorted."""
    doc: dict = {
        "name": dataset.name,
        "requirements": [{"id": r.id, "text": r.text} for r in dataset.requirements],
        "change_rationales": [
            {"id": c.id, "text": c.text}
            if c.category is None
            else {"id": c.id, "text": c.text, "category": c.category}
            for c in dataset.rationales
        ],
    }
    if dataset.gold is not None:
        doc["gold"] = [
            {"rationale_id": g.rationale_id, "impacted_ids": sorted(g.impacted_ids)}
            for g in dataset.gold
        ]
    return doc


def save_dataset(dataset: Dataset, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(dataset_to_dict(dataset), fh, ensure_ascii=False, indent=2)
        fh.write("\n")


def gold_stats(dataset: Dataset) -> GoldStats:
    """Count requirements impacted by at least one rationale.

    The fraction is taken over all requirements in the dataset.
    """
    if dataset.gold is None:
        raise DatasetValidationError("dataset has no gold impact sets")
    impacted: set[str] = set()
    for entry in dataset.gold:
        impacted.update(entry.impacted_ids)
    if dataset.n_req == 0:
        return GoldStats(impacted_count=0, impacted_fraction=0.0)
    return GoldStats(
        impacted_count=len(impacted),
        impacted_fraction=len(impacted) / dataset.n_req,
    )
