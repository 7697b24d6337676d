"""Command-line entry point.

Subcommands: ``dataset validate``, ``prompts list``, ``run``,
``baseline sim|iter|cot``, ``eval``, ``ablate``, ``record``.

Exit codes: 0 success, 1 usage error, 2 data/validation error, 3 backend
error. Credentials are only ever read from environment variables named in
the configuration, never from flags. Defaults follow the published setup:
sampling temperature 0 with seed 16, gradient-boosting seed 42.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from reqimpact import ablation, baselines, corpus, entailment, metrics, pipeline, prompts
from reqimpact.llm import (
    BackendError,
    ChatParams,
    HttpChatBackend,
    RankingParseError,
    ReplayStore,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_BACKEND = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # map argparse failures onto exit code 1
        raise UsageError(message)


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}")
    except json.JSONDecodeError as exc:
        raise corpus.DatasetParseError(f"malformed config {path}: {exc}")
    if not isinstance(doc, dict):
        raise corpus.DatasetParseError(f"config {path}: top level must be an object")
    return doc


def _setting(args, config: dict, name: str, default=None):
    value = getattr(args, name.replace("-", "_"), None)
    if value is not None:
        return value
    if name in config:
        return config[name]
    return default


REPLAY_MODE_ALIASES = {
    "strict": "strict-replay",
    "strict-replay": "strict-replay",
    "replay": "replay",
    "record": "record",
}


def _chat_backend(args, config: dict):
    mode = _setting(args, config, "replay")
    store = _setting(args, config, "replay_store") or _setting(args, config, "replay-store")
    endpoint = _setting(args, config, "endpoint")
    credential_env = _setting(args, config, "credential_env", "CHAT_API_KEY")
    live = HttpChatBackend(endpoint, credential_env=credential_env) if endpoint else None
    if mode:
        if mode not in REPLAY_MODE_ALIASES:
            raise UsageError(f"unknown replay mode {mode!r}")
        if not store:
            raise UsageError("replay mode set but no --replay-store given")
        return ReplayStore(store, mode=REPLAY_MODE_ALIASES[mode], live=live)
    if store:
        return ReplayStore(store, mode="strict-replay", live=live)
    if live is None:
        raise UsageError("no chat backend: give --endpoint or --replay-store")
    return live


def _entailment_backend(args, config: dict):
    kind = _setting(args, config, "entailment", "lexical")
    if kind == "lexical":
        threshold = float(_setting(args, config, "entailment_threshold", 0.2))
        return entailment.LexicalEntailment(threshold=threshold)
    if kind == "remote":
        base_url = _setting(args, config, "entailment_url")
        model_id = _setting(args, config, "entailment_model_id")
        if not base_url or not model_id:
            raise UsageError("remote entailment needs --entailment-url and --entailment-model-id")
        import os

        token_env = _setting(args, config, "entailment_token_env")
        token = os.environ.get(token_env, "") if token_env else None
        client = entailment.NliServiceClient(base_url, token=token or None)
        return entailment.RemoteEntailment(client, model_id)
    raise UsageError(f"unknown entailment backend {kind!r}")


def _embedding_backend(args, config: dict):
    kind = _setting(args, config, "embedder", "hash")
    if kind == "hash":
        dim = int(_setting(args, config, "dim", 256))
        return baselines.HashingEmbedder(dim=dim)
    if kind == "http":
        endpoint = _setting(args, config, "embedding_endpoint")
        model = _setting(args, config, "embedding_model")
        if not endpoint or not model:
            raise UsageError("http embedder needs --embedding-endpoint and --embedding-model")
        credential_env = _setting(args, config, "embedding_credential_env", "EMBEDDING_API_KEY")
        return baselines.HttpEmbeddingBackend(endpoint, model, credential_env=credential_env)
    raise UsageError(f"unknown embedder {kind!r}")


def _catalog(args, config: dict, dataset: corpus.Dataset | None = None):
    templates_dir = _setting(args, config, "templates")
    domain = _setting(args, config, "domain")
    if domain is None and dataset is not None:
        domain = dataset.name
    return prompts.load_catalog(templates_dir, domain=domain or "")


def _pipeline_config(args, config: dict) -> pipeline.PipelineConfig:
    params = ChatParams(
        temperature=float(_setting(args, config, "temperature", 0.0)),
        seed=int(_setting(args, config, "seed", 16)),
        frequency_penalty=float(_setting(args, config, "frequency_penalty", 0.0)),
        presence_penalty=float(_setting(args, config, "presence_penalty", 0.0)),
    )
    refinement = _setting(args, config, "refinement", True)
    filtering = _setting(args, config, "filtering", True)
    if getattr(args, "no_refinement", False):
        refinement = False
    if getattr(args, "no_filtering", False):
        filtering = False
    return pipeline.PipelineConfig(
        prompt_id=_setting(args, config, "prompt", "P30"),
        refinement_enabled=bool(refinement),
        filtering_enabled=bool(filtering),
        batch_token_budget=int(_setting(args, config, "budget", 100_000)),
        repetitions=int(_setting(args, config, "repetitions", 1)),
        ranking_fallback=_setting(args, config, "ranking_fallback", "retry"),
        model=_setting(args, config, "model", "llama3-405b"),
        params=params,
    )


def _select_rationales(dataset: corpus.Dataset, only: str | None):
    if only is None:
        return list(dataset.rationales)
    try:
        return [dataset.rationale(only)]
    except KeyError:
        raise corpus.DatasetValidationError(f"unknown rationale id {only!r}")


# ---------------------------------------------------------------- commands


def cmd_dataset_validate(args, config: dict) -> int:
    dataset = corpus.load_dataset(args.dataset)
    line = (
        f"name={dataset.name} requirements={dataset.n_req} "
        f"rationales={dataset.n_rationales}"
    )
    if dataset.gold is not None:
        stats = corpus.gold_stats(dataset)
        line += (
            f" impacted={stats.impacted_count}"
            f" ({metrics.percent(stats.impacted_fraction, 0)}%)"
        )
    print(line)
    return EXIT_OK


def cmd_prompts_list(args, config: dict) -> int:
    for spec in prompts.enumerate_prompts():
        print(f"{spec.prompt_id}: {spec.describe()}")
    return EXIT_OK


def cmd_run(args, config: dict) -> int:
    dataset = corpus.load_dataset(_setting(args, config, "dataset"))
    cfg = _pipeline_config(args, config)
    catalog = _catalog(args, config, dataset)
    backend = _chat_backend(args, config)
    ent_backend = _entailment_backend(args, config) if cfg.filtering_enabled else None
    out_dir = _setting(args, config, "out")
    if not out_dir:
        raise UsageError("run needs --out DIRECTORY")
    rationales = _select_rationales(dataset, args.rationale)

    def run_one(rationale):
        impact_set, trace = pipeline.run(
            rationale, dataset, cfg, catalog, backend, ent_backend
        )
        pipeline.write_run_artifacts(out_dir, rationale.id, impact_set, trace)
        return rationale.id, impact_set

    parallel = int(_setting(args, config, "parallel", 1))
    if parallel > 1:
        with ThreadPoolExecutor(max_workers=parallel) as pool:
            results = list(pool.map(run_one, rationales))
    else:
        results = [run_one(r) for r in rationales]
    for rationale_id, impact_set in results:
        print(f"{rationale_id}: {' '.join(impact_set.ids())}")
    return EXIT_OK


def cmd_record(args, config: dict) -> int:
    args.replay = "record"
    if not (_setting(args, config, "endpoint")):
        raise UsageError("record needs --endpoint")
    if not (_setting(args, config, "replay_store")):
        raise UsageError("record needs --replay-store")
    return cmd_run(args, config)


def _load_score_ranking(path: str) -> baselines.SimilarityRanking:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read scores {path}: {exc}")
    except json.JSONDecodeError as exc:
        raise corpus.DatasetParseError(f"malformed scores {path}: {exc}")
    items = doc["scores"] if isinstance(doc, dict) else doc
    entries = [(str(item["id"]), float(item["score"])) for item in items]
    entries.sort(key=lambda e: -e[1])
    return baselines.SimilarityRanking(entries=tuple(entries))


def _apply_cutoff(ranking: baselines.SimilarityRanking, strategy: str, theta: float):
    try:
        choice = baselines.CutoffChoice(strategy=strategy, theta=theta)
    except ValueError as exc:
        raise UsageError(str(exc))
    return choice.apply(ranking)


def cmd_baseline_sim(args, config: dict) -> int:
    theta = float(_setting(args, config, "theta", 0.5))
    if args.scores:
        ranking = _load_score_ranking(args.scores)
        selected = _apply_cutoff(ranking, args.strategy, theta)
        for req_id in ranking.ids():
            if req_id in selected:
                print(req_id)
        return EXIT_OK
    dataset = corpus.load_dataset(_setting(args, config, "dataset"))
    backend = _embedding_backend(args, config)
    for rationale in _select_rationales(dataset, args.rationale):
        ranking = baselines.rank_by_similarity(rationale, dataset, backend)
        selected = _apply_cutoff(ranking, args.strategy, theta)
        ordered = [req_id for req_id in ranking.ids() if req_id in selected]
        print(f"{rationale.id}: {' '.join(ordered)}")
    return EXIT_OK


def cmd_baseline_iter(args, config: dict) -> int:
    dataset = corpus.load_dataset(_setting(args, config, "dataset"))
    cfg = _pipeline_config(args, config)
    catalog = _catalog(args, config, dataset)
    backend = _chat_backend(args, config)
    for rationale in _select_rationales(dataset, args.rationale):
        result = baselines.iterative_baseline(
            rationale,
            dataset,
            cfg.spec(),
            catalog,
            backend,
            model=cfg.model,
            params=cfg.params,
            max_workers=int(_setting(args, config, "parallel", 1)),
        )
        print(f"{rationale.id}: {' '.join(result.ids())}")
    return EXIT_OK


def cmd_baseline_cot(args, config: dict) -> int:
    dataset = corpus.load_dataset(_setting(args, config, "dataset"))
    cfg = _pipeline_config(args, config)
    catalog = _catalog(args, config, dataset)
    chat_backend = _chat_backend(args, config)
    embedding_backend = _embedding_backend(args, config)
    k = int(_setting(args, config, "k", 20))
    for rationale in _select_rationales(dataset, args.rationale):
        result = baselines.cot_baseline(
            rationale,
            dataset,
            k,
            embedding_backend,
            chat_backend,
            catalog,
            model=cfg.model,
            params=cfg.params,
            max_workers=int(_setting(args, config, "parallel", 1)),
        )
        print(f"{rationale.id}: {' '.join(result.ids())}")
    return EXIT_OK


def _load_predictions(path: str) -> dict[str, list[str]]:
    """Accept a run-artifact directory or a JSON mapping rationale -> ids."""
    p = Path(path)
    if p.is_dir():
        predictions: dict[str, list[str]] = {}
        for artifact in sorted(p.glob("*/impact_set.json")):
            doc = json.loads(artifact.read_text("utf-8"))
            predictions[doc["rationale_id"]] = [c["req_id"] for c in doc["candidates"]]
        if not predictions:
            raise corpus.DatasetValidationError(f"no impact_set.json artifacts under {path}")
        return predictions
    try:
        doc = json.loads(p.read_text("utf-8"))
    except OSError as exc:
        raise UsageError(f"cannot read predictions {path}: {exc}")
    except json.JSONDecodeError as exc:
        raise corpus.DatasetParseError(f"malformed predictions {path}: {exc}")
    if isinstance(doc, dict) and "candidates" in doc:
        return {doc["rationale_id"]: [c["req_id"] for c in doc["candidates"]]}
    return {str(k): [str(i) for i in v] for k, v in doc.items()}


def _counts_for(dataset: corpus.Dataset, predictions: dict[str, list[str]]):
    counts = []
    for rationale in dataset.rationales:
        predicted = predictions.get(rationale.id, [])
        counts.append(
            metrics.confusion(predicted, dataset.gold_for(rationale.id), rationale.id)
        )
    return counts


def cmd_eval(args, config: dict) -> int:
    dataset = corpus.load_dataset(_setting(args, config, "dataset"))
    if dataset.gold is None:
        raise corpus.DatasetValidationError("eval needs a dataset with gold impact sets")
    fmt = args.format
    if args.stage:
        results = []
        for stage_arg in args.stage:
            if "=" not in stage_arg:
                raise UsageError(f"--stage expects NAME=PATH, got {stage_arg!r}")
            name, _, path = stage_arg.partition("=")
            counts = _counts_for(dataset, _load_predictions(path))
            results.append(
                metrics.StageResult(
                    stage=name,
                    tp=sum(c.tp for c in counts),
                    fn=sum(c.fn for c in counts),
                    fp=sum(c.fp for c in counts),
                    effectiveness=metrics.effectiveness(counts),
                    cost=metrics.cost(counts, dataset.n_req),
                )
            )
        print(metrics.render_stage_table(results), end="")
        return EXIT_OK
    if not args.pred:
        raise UsageError("eval needs --pred or --stage")
    counts = _counts_for(dataset, _load_predictions(args.pred))
    report = metrics.build_report(counts, dataset.n_req)
    print(metrics.render_report(report, fmt), end="")
    return EXIT_OK


def cmd_ablate(args, config: dict) -> int:
    try:
        with open(args.scores, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read scores {args.scores}: {exc}")
    except json.JSONDecodeError as exc:
        raise corpus.DatasetParseError(f"malformed scores {args.scores}: {exc}")
    if args.per_rationale:
        rows = ablation.rows_from_rationale_scores(doc)
    else:
        rows = ablation.rows_from_prompt_scores(doc)
    n_estimators = int(_setting(args, config, "n_estimators", 40))
    if args.grid:
        grid = [int(n) for n in str(args.grid).split(",") if n]
        n_estimators = ablation.elbow_select(
            rows, grid, learning_rate=args.learning_rate, max_depth=args.max_depth
        )
        print(f"selected n_estimators={n_estimators}")
    model = ablation.fit_gbdt(
        rows,
        n_estimators=n_estimators,
        learning_rate=args.learning_rate,
        max_depth=args.max_depth,
        seed=int(_setting(args, config, "gbdt_seed", 42)),
    )
    report = ablation.importance_report(rows, model)
    if report.degenerate:
        print("warning: all importances are zero (constant target)", file=sys.stderr)
    print(ablation.render_importance_report(report, args.format), end="")
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser() -> _Parser:
    parser = _Parser(prog="reqimpact", description=__doc__)
    parser.add_argument("--config", help="JSON config file; flags override its values")
    sub = parser.add_subparsers(dest="command", required=True)

    p_dataset = sub.add_parser("dataset", help="dataset utilities")
    dataset_sub = p_dataset.add_subparsers(dest="dataset_command", required=True)
    p_validate = dataset_sub.add_parser("validate", help="load and validate a dataset")
    p_validate.add_argument("dataset")
    p_validate.set_defaults(func=cmd_dataset_validate)

    p_prompts = sub.add_parser("prompts", help="prompt-variant utilities")
    prompts_sub = p_prompts.add_subparsers(dest="prompts_command", required=True)
    p_list = prompts_sub.add_parser("list", help="list the 64 prompt variants")
    p_list.set_defaults(func=cmd_prompts_list)

    def add_llm_flags(p):
        p.add_argument("--dataset")
        p.add_argument("--prompt")
        p.add_argument("--model")
        p.add_argument("--endpoint")
        p.add_argument("--credential-env")
        p.add_argument("--replay", choices=sorted(REPLAY_MODE_ALIASES))
        p.add_argument("--replay-store")
        p.add_argument("--budget", type=int)
        p.add_argument("--repetitions", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--temperature", type=float)
        p.add_argument("--domain")
        p.add_argument("--templates")
        p.add_argument("--rationale")
        p.add_argument("--parallel", type=int)

    p_run = sub.add_parser("run", help="run the pipeline per change rationale")
    add_llm_flags(p_run)
    p_run.add_argument("--out")
    p_run.add_argument("--no-refinement", action="store_true")
    p_run.add_argument("--no-filtering", action="store_true")
    p_run.add_argument("--ranking-fallback", choices=pipeline.RANKING_FALLBACKS)
    p_run.add_argument("--entailment", choices=("lexical", "remote"))
    p_run.add_argument("--entailment-threshold", type=float)
    p_run.add_argument("--entailment-url")
    p_run.add_argument("--entailment-model-id")
    p_run.add_argument("--entailment-token-env")
    p_run.set_defaults(func=cmd_run)

    p_record = sub.add_parser("record", help="run against a live backend, recording responses")
    add_llm_flags(p_record)
    p_record.add_argument("--out")
    p_record.add_argument("--no-refinement", action="store_true")
    p_record.add_argument("--no-filtering", action="store_true")
    p_record.add_argument("--ranking-fallback", choices=pipeline.RANKING_FALLBACKS)
    p_record.add_argument("--entailment", choices=("lexical", "remote"))
    p_record.add_argument("--entailment-threshold", type=float)
    p_record.add_argument("--entailment-url")
    p_record.add_argument("--entailment-model-id")
    p_record.add_argument("--entailment-token-env")
    p_record.set_defaults(func=cmd_record)

    p_baseline = sub.add_parser("baseline", help="comparison systems")
    baseline_sub = p_baseline.add_subparsers(dest="baseline_command", required=True)

    p_sim = baseline_sub.add_parser("sim", help="embedding similarity with a cutoff")
    p_sim.add_argument("--dataset")
    p_sim.add_argument("--scores", help="JSON of precomputed (id, score) pairs")
    p_sim.add_argument("--strategy", required=True, choices=("t1", "t2", "t3"))
    p_sim.add_argument("--theta", type=float)
    p_sim.add_argument("--embedder", choices=("hash", "http"))
    p_sim.add_argument("--dim", type=int)
    p_sim.add_argument("--embedding-endpoint")
    p_sim.add_argument("--embedding-model")
    p_sim.add_argument("--embedding-credential-env")
    p_sim.add_argument("--rationale")
    p_sim.set_defaults(func=cmd_baseline_sim)

    p_iter = baseline_sub.add_parser("iter", help="one prompt per requirement")
    add_llm_flags(p_iter)
    p_iter.set_defaults(func=cmd_baseline_iter)

    p_cot = baseline_sub.add_parser("cot", help="retrieve top-k then ask yes/no per pair")
    add_llm_flags(p_cot)
    p_cot.add_argument("--k", type=int)
    p_cot.add_argument("--embedder", choices=("hash", "http"))
    p_cot.add_argument("--dim", type=int)
    p_cot.add_argument("--embedding-endpoint")
    p_cot.add_argument("--embedding-model")
    p_cot.add_argument("--embedding-credential-env")
    p_cot.set_defaults(func=cmd_baseline_cot)

    p_eval = sub.add_parser("eval", help="score predictions against gold")
    p_eval.add_argument("--dataset")
    p_eval.add_argument("--pred", help="run-artifact directory or predictions JSON")
    p_eval.add_argument("--stage", action="append",
                        help="NAME=PATH; repeat for a per-stage totals table")
    p_eval.add_argument("--format", default="csv", choices=("csv", "markdown"))
    p_eval.set_defaults(func=cmd_eval)

    p_ablate = sub.add_parser("ablate", help="prompt-detail importance report")
    p_ablate.add_argument("--scores", required=True, help="JSON mapping prompt id to F2")
    p_ablate.add_argument("--per-rationale", action="store_true")
    p_ablate.add_argument("--n-estimators", type=int)
    p_ablate.add_argument("--learning-rate", type=float, default=0.1)
    p_ablate.add_argument("--max-depth", type=int, default=3)
    p_ablate.add_argument("--gbdt-seed", type=int)
    p_ablate.add_argument("--grid", help="comma-separated estimator grid for the elbow scan")
    p_ablate.add_argument("--format", default="markdown", choices=("csv", "markdown"))
    p_ablate.set_defaults(func=cmd_ablate)

    return parser


def dispatch(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(list(argv))
        config = _load_config(args.config)
        return args.func(args, config)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (corpus.DatasetParseError, corpus.DatasetValidationError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except RankingParseError as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except BackendError as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except (ValueError, KeyError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
