"""Which prompt details matter: gradient-boosted trees over detail indicators.

Each prompt variant becomes a row of six binary indicators (details 1, 3, 4,
5, 6, 7; detail 2 is in every prompt and carries no signal) with the F2
score as the regression target. A small squared-error gradient-boosting
model is fit from scratch so that split search, tie-breaking, and the
impurity-decrease importance computation are fully deterministic and
inspectable. Importance of a detail is the impurity decrease gathered by
its splits, normalized per tree by the root sample count, averaged over
trees, and finally normalized to sum to one. The effect sign says whether
including the detail is associated with a higher mean target.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from reqimpact.prompts import enumerate_prompts

# Feature column order; column i holds the indicator of FEATURE_DETAILS[i].
FEATURE_DETAILS = (1, 3, 4, 5, 6, 7)


@dataclass(frozen=True)
class DetailFeatureRow:
    """Six binary indicators plus the F2 target for one prompt variant."""

    indicators: tuple[int, ...]
    target: float

    def __post_init__(self):
        if len(self.indicators) != len(FEATURE_DETAILS):
            raise ValueError(f"expected {len(FEATURE_DETAILS)} indicators")
        if any(v not in (0, 1) for v in self.indicators):
            raise ValueError("indicators must be binary")


def rows_from_prompt_scores(prompt_f2: dict[str, float]) -> list[DetailFeatureRow]:
    """One row per prompt id; targets above 1 are treated as percentages."""
    specs = {s.prompt_id: s for s in enumerate_prompts()}
    rows = []
    for prompt_id in sorted(prompt_f2, key=lambda p: int(p.lstrip("Pp"))):
        spec = specs.get(prompt_id)
        if spec is None:
            raise ValueError(f"unknown prompt id {prompt_id!r}")
        target = float(prompt_f2[prompt_id])
        if target > 1.0:
            target /= 100.0
        indicators = tuple(int(d in spec.details) for d in FEATURE_DETAILS)
        rows.append(DetailFeatureRow(indicators=indicators, target=target))
    return rows


def rows_from_rationale_scores(
    prompt_rationale_f2: dict[str, dict[str, float]]
) -> list[DetailFeatureRow]:
    """One row per (prompt, rationale) pair."""
    rows = []
    for prompt_id in sorted(prompt_rationale_f2, key=lambda p: int(p.lstrip("Pp"))):
        per_rationale = prompt_rationale_f2[prompt_id]
        for rationale_id in sorted(per_rationale):
            rows.extend(
                rows_from_prompt_scores({prompt_id: per_rationale[rationale_id]})
            )
    return rows


@dataclass
class TreeNode:
    """Regression-tree node; leaves have ``feature`` None."""

    n_samples: int
    impurity: float  # mean squared error at this node
    value: float  # mean target at this node
    feature: int | None = None
    threshold: float = 0.5
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None

    def is_leaf(self) -> bool:
        return self.feature is None

    def predict_one(self, x) -> float:
        node = self
        while not node.is_leaf():
            node = node.left if x[node.feature] <= node.threshold else node.right
        return node.value


@dataclass
class GbdtModel:
    base_prediction: float
    learning_rate: float
    trees: list[TreeNode] = field(default_factory=list)
    n_features: int = len(FEATURE_DETAILS)

    @property
    def n_estimators(self) -> int:
        return len(self.trees)

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        out = np.full(X.shape[0], self.base_prediction)
        for tree in self.trees:
            out += self.learning_rate * np.array(
                [tree.predict_one(row) for row in X]
            )
        return out

    def staged_mse(self, X, y) -> list[float]:
        """Training MSE after each added tree (index 0 = base only)."""
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        pred = np.full(X.shape[0], self.base_prediction)
        curve = [float(np.mean((y - pred) ** 2))]
        for tree in self.trees:
            pred = pred + self.learning_rate * np.array(
                [tree.predict_one(row) for row in X]
            )
            curve.append(float(np.mean((y - pred) ** 2)))
        return curve


def _sse(y: np.ndarray) -> float:
    if y.size == 0:
        return 0.0
    return float(np.sum((y - y.mean()) ** 2))


def _build_tree(X: np.ndarray, y: np.ndarray, depth: int, max_depth: int) -> TreeNode:
    node = TreeNode(
        n_samples=int(y.size),
        impurity=float(np.mean((y - y.mean()) ** 2)) if y.size else 0.0,
        value=float(y.mean()) if y.size else 0.0,
    )
    if depth >= max_depth or y.size < 2:
        return node

    parent_sse = _sse(y)
    best_gain = 0.0
    best: tuple[int, float, np.ndarray] | None = None
    for feature in range(X.shape[1]):
        values = np.unique(X[:, feature])
        if values.size < 2:
            continue
        for threshold in (values[:-1] + values[1:]) / 2.0:
            mask = X[:, feature] <= threshold
            gain = parent_sse - _sse(y[mask]) - _sse(y[~mask])
            # strict > keeps the lowest feature index on exact ties
            if gain > best_gain:
                best_gain = gain
                best = (feature, float(threshold), mask)
    if best is None:
        return node

    feature, threshold, mask = best
    node.feature = feature
    node.threshold = threshold
    node.left = _build_tree(X[mask], y[mask], depth + 1, max_depth)
    node.right = _build_tree(X[~mask], y[~mask], depth + 1, max_depth)
    return node


def _as_matrix(rows: list[DetailFeatureRow]) -> tuple[np.ndarray, np.ndarray]:
    X = np.array([row.indicators for row in rows], dtype=float)
    y = np.array([row.target for row in rows], dtype=float)
    return X, y


def fit_gbdt(
    rows: list[DetailFeatureRow],
    n_estimators: int = 40,
    learning_rate: float = 0.1,
    max_depth: int = 3,
    seed: int = 42,
) -> GbdtModel:
    """Squared-error boosting: start from the target mean, fit each tree to
    the residuals, shrink by the learning rate.

    The split search is exhaustive and deterministic (ties go to the lowest
    feature index), so ``seed`` has no effect on the fit; it is accepted for
    interface parity with stochastic implementations.
    """
    del seed
    if len(rows) < 2:
        raise ValueError("need at least 2 rows to fit")
    X, y = _as_matrix(rows)
    if not np.all(np.isfinite(y)):
        raise ValueError("targets must be finite")
    model = GbdtModel(base_prediction=float(y.mean()), learning_rate=learning_rate)
    residual = y - model.base_prediction
    for _ in range(n_estimators):
        tree = _build_tree(X, residual, depth=0, max_depth=max_depth)
        model.trees.append(tree)
        residual = residual - learning_rate * np.array(
            [tree.predict_one(row) for row in X]
        )
    return model


def _tree_importances(tree: TreeNode, n_features: int) -> np.ndarray:
    """Impurity decrease per feature, divided by the root sample count."""
    raw = np.zeros(n_features)

    def visit(node: TreeNode) -> None:
        if node.is_leaf():
            return
        decrease = (
            node.n_samples * node.impurity
            - node.left.n_samples * node.left.impurity
            - node.right.n_samples * node.right.impurity
        )
        raw[node.feature] += decrease
        visit(node.left)
        visit(node.right)

    visit(tree)
    return raw / tree.n_samples


def feature_importance(model: GbdtModel) -> dict[int, float]:
    """Raw per-detail importance, averaged over trees (not yet normalized)."""
    if not model.trees:
        raise ValueError("model has no trees")
    total = np.zeros(model.n_features)
    for tree in model.trees:
        total += _tree_importances(tree, model.n_features)
    averaged = total / len(model.trees)
    return {detail: float(averaged[i]) for i, detail in enumerate(FEATURE_DETAILS)}


def effect_sign(rows: list[DetailFeatureRow], detail: int) -> str:
    """Sign of including the detail: "+" when rows with it have a higher
    mean target than rows without; equal means count as "-"."""
    idx = FEATURE_DETAILS.index(detail)
    with_detail = [r.target for r in rows if r.indicators[idx] == 1]
    without = [r.target for r in rows if r.indicators[idx] == 0]
    if not with_detail or not without:
        raise ValueError(f"detail {detail} is constant across rows")
    return "+" if float(np.mean(with_detail)) > float(np.mean(without)) else "-"


@dataclass(frozen=True)
class ImportanceReport:
    """Normalized importance score and effect sign per detail."""

    scores: dict[int, float]
    effects: dict[int, str]
    degenerate: bool = False

    def ordered(self) -> list[tuple[int, float, str]]:
        """(detail, score, effect) sorted by score descending, detail ascending."""
        return sorted(
            ((d, self.scores[d], self.effects[d]) for d in FEATURE_DETAILS),
            key=lambda item: (-item[1], item[0]),
        )


def importance_report(rows: list[DetailFeatureRow], model: GbdtModel) -> ImportanceReport:
    raw = feature_importance(model)
    total = sum(raw.values())
    degenerate = total <= 0.0
    if degenerate:
        scores = {d: 0.0 for d in FEATURE_DETAILS}
    else:
        scores = {d: raw[d] / total for d in FEATURE_DETAILS}
    effects = {}
    for d in FEATURE_DETAILS:
        try:
            effects[d] = effect_sign(rows, d)
        except ValueError:
            effects[d] = "-"  # constant detail: no evidence of improvement
    return ImportanceReport(scores=scores, effects=effects, degenerate=degenerate)


def elbow_select(
    rows: list[DetailFeatureRow],
    n_grid: list[int],
    learning_rate: float = 0.1,
    max_depth: int = 3,
    rel_tolerance: float = 1e-6,
) -> int:
    """Smallest estimator count whose training MSE is within tolerance of
    the grid minimum."""
    if not n_grid:
        raise ValueError("empty estimator grid")
    grid = sorted(set(n_grid))
    model = fit_gbdt(
        rows, n_estimators=max(grid), learning_rate=learning_rate, max_depth=max_depth
    )
    X, y = _as_matrix(rows)
    curve = model.staged_mse(X, y)
    mses = {n: curve[n] for n in grid}
    best = min(mses.values())
    cutoff = best * (1.0 + rel_tolerance)
    for n in grid:
        if mses[n] <= cutoff:
            return n
    return grid[-1]


def render_importance_report(report: ImportanceReport, fmt: str = "markdown") -> str:
    """Detail/score/effect table, CSV or markdown, sorted by score."""
    if fmt not in ("csv", "markdown"):
        raise ValueError(f"unknown report format {fmt!r}")
    rows = [(str(d), f"{score:.2f}", effect) for d, score, effect in report.ordered()]
    if fmt == "csv":
        lines = ["detail,S,E"] + [",".join(r) for r in rows]
    else:
        lines = ["| D | S | E |", "| --- | --- | --- |"] + [
            "| " + " | ".join(r) + " |" for r in rows
        ]
    return "\n".join(lines) + "\n"
