import random

import numpy as np
import pytest

from reqimpact import baselines
from reqimpact.baselines import SimilarityRanking
from reqimpact.corpus import ChangeRationale, Dataset, GoldImpact, Requirement
from reqimpact.prompts import load_catalog, prompt_by_id

from conftest import RouterBackend, impact_lines

WORKED_SCORES = [0.85, 0.82, 0.80, 0.78, 0.60, 0.58, 0.57, 0.40]


def ranking_of(scores):
    return SimilarityRanking(
        entries=tuple((f"R{i + 1}", s) for i, s in enumerate(scores))
    )


def small_dataset(texts, rationale_text="Replace the alpha module with beta."):
    return Dataset(
        name="Small",
        requirements=tuple(
            Requirement(id=f"R{i + 1}", text=t) for i, t in enumerate(texts)
        ),
        rationales=(ChangeRationale(id="C1", text=rationale_text),),
    )


class TestHashingEmbedder:
    def test_identical_texts_identical_vectors(self):
        emb = baselines.HashingEmbedder(dim=64)
        a, b = emb.embed(["same words here", "same words here"])
        assert np.array_equal(a, b)

    def test_unit_norm(self):
        emb = baselines.HashingEmbedder(dim=64)
        for text in ["one", "two words", "", "!!!", "a b c d e f g"]:
            (v,) = emb.embed([text])
            assert abs(np.linalg.norm(v) - 1.0) < 1e-12

    def test_empty_list(self):
        assert baselines.embed([], baselines.HashingEmbedder()) == []

    def test_deterministic_across_instances(self):
        a = baselines.HashingEmbedder(dim=128).embed(["alpha beta"])[0]
        b = baselines.HashingEmbedder(dim=128).embed(["alpha beta"])[0]
        assert np.array_equal(a, b)


class FakeResponse:
    def __init__(self, status_code=200, payload=None, text=""):
        self.status_code = status_code
        self._payload = payload
        self.text = text

    def json(self):
        return self._payload


class FakeSession:
    def __init__(self, response):
        self.response = response
        self.calls = []

    def post(self, url, json=None, headers=None, timeout=None):
        self.calls.append({"url": url, "json": json, "headers": headers})
        return self.response


class TestHttpEmbeddingBackend:
    def test_vectors_in_input_order(self, monkeypatch):
        monkeypatch.setenv("TEST_EMB_KEY", "tok-9")
        session = FakeSession(
            FakeResponse(payload={"data": [{"embedding": [1.0, 0.0]}, {"embedding": [0.0, 2.0]}]})
        )
        backend = baselines.HttpEmbeddingBackend(
            "http://emb.example/v1", model="embed-1",
            credential_env="TEST_EMB_KEY", session=session,
        )
        vectors = baselines.embed(["a", "b"], backend)
        assert np.array_equal(vectors[0], [1.0, 0.0])
        assert np.array_equal(vectors[1], [0.0, 2.0])
        call = session.calls[0]
        assert call["json"] == {"model": "embed-1", "input": ["a", "b"]}
        assert call["headers"]["Authorization"] == "Bearer tok-9"

    def test_rate_limit_is_transient(self):
        backend = baselines.HttpEmbeddingBackend(
            "http://emb.example/v1", model="embed-1",
            session=FakeSession(FakeResponse(status_code=429)),
        )
        from reqimpact.llm import BackendError

        with pytest.raises(BackendError) as err:
            backend.embed(["a"])
        assert err.value.transient

    def test_wrong_vector_count_rejected(self):
        backend = baselines.HttpEmbeddingBackend(
            "http://emb.example/v1", model="embed-1",
            session=FakeSession(FakeResponse(payload={"data": [{"embedding": [1.0]}]})),
        )
        from reqimpact.llm import BackendError

        with pytest.raises(BackendError):
            baselines.embed(["a", "b"], backend)


class TestCosine:
    def test_self_similarity(self):
        v = np.array([1.0, 2.0, 3.0])
        assert baselines.cosine(v, v) == pytest.approx(1.0)

    def test_orthogonal(self):
        assert baselines.cosine(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == pytest.approx(0.0)

    def test_opposite(self):
        v = np.array([0.3, -0.7])
        assert baselines.cosine(v, -v) == pytest.approx(-1.0)

    def test_zero_vector_rejected(self):
        with pytest.raises(ValueError):
            baselines.cosine(np.zeros(3), np.ones(3))

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(ValueError):
            baselines.cosine(np.ones(3), np.ones(4))


class TestRankBySimilarity:
    def test_single_requirement(self):
        ds = small_dataset(["only one requirement"])
        ranking = baselines.rank_by_similarity(
            ds.rationales[0], ds, baselines.HashingEmbedder()
        )
        assert len(ranking) == 1

    def test_duplicate_texts_tie_broken_by_dataset_order(self):
        ds = small_dataset(["identical text", "identical text", "identical text"])
        ranking = baselines.rank_by_similarity(
            ds.rationales[0], ds, baselines.HashingEmbedder()
        )
        assert ranking.ids() == ["R1", "R2", "R3"]

    def test_matches_brute_force_cosines(self):
        texts = [
            "alpha module interface",
            "beta replacement procedure",
            "unrelated reporting dashboard",
            "alpha and beta integration",
        ]
        ds = small_dataset(texts)
        backend = baselines.HashingEmbedder(dim=128)
        ranking = baselines.rank_by_similarity(ds.rationales[0], ds, backend)

        # independent computation straight from the embedding vectors
        vecs = backend.embed([ds.rationales[0].text] + texts)
        expected = [
            (f"R{i + 1}", float(np.dot(vecs[0], v) / (np.linalg.norm(vecs[0]) * np.linalg.norm(v))))
            for i, v in enumerate(vecs[1:])
        ]
        expected.sort(key=lambda e: -e[1])
        assert ranking.ids() == [e[0] for e in expected]
        for (_, got), (_, want) in zip(ranking.entries, expected):
            assert got == pytest.approx(want)


class TestCutoffT1:
    def test_all_below_threshold(self):
        assert baselines.cutoff_t1(ranking_of([0.4, 0.3]), 0.5) == set()

    def test_simple_threshold(self):
        assert baselines.cutoff_t1(ranking_of([0.9, 0.6, 0.4]), 0.5) == {"R1", "R2"}

    def test_exact_threshold_excluded(self):
        assert baselines.cutoff_t1(ranking_of([0.5, 0.4]), 0.5) == set()

    def test_monotone_in_theta(self):
        rng = random.Random(2)
        for _ in range(50):
            scores = sorted((rng.random() for _ in range(10)), reverse=True)
            r = ranking_of(scores)
            t1, t2 = sorted((rng.random(), rng.random()))
            assert baselines.cutoff_t1(r, t2) <= baselines.cutoff_t1(r, t1)


class TestCutoffT2:
    def test_worked_example_keeps_seven(self):
        kept = baselines.cutoff_t2(ranking_of(WORKED_SCORES))
        assert kept == {f"R{i}" for i in range(1, 8)}

    def test_equal_scores_keep_nothing(self):
        assert baselines.cutoff_t2(ranking_of([0.5, 0.5, 0.5])) == set()

    def test_two_scores(self):
        assert baselines.cutoff_t2(ranking_of([0.9, 0.1])) == {"R1"}

    def test_result_is_prefix(self):
        rng = random.Random(4)
        for _ in range(100):
            scores = sorted((rng.random() for _ in range(rng.randrange(2, 12))), reverse=True)
            r = ranking_of(scores)
            kept = baselines.cutoff_t2(r)
            ids = r.ids()
            assert kept == set(ids[: len(kept)])

    def test_too_short_rejected(self):
        with pytest.raises(ValueError):
            baselines.cutoff_t2(ranking_of([0.9]))


class TestCutoffT3:
    def test_worked_example_keeps_four(self):
        kept = baselines.cutoff_t3(ranking_of(WORKED_SCORES))
        assert kept == {"R1", "R2", "R3", "R4"}

    def test_tied_drops_take_earlier_position(self):
        kept = baselines.cutoff_t3(ranking_of([0.9, 0.6, 0.3]))
        assert kept == {"R1"}

    def test_flat_then_final_drop_keeps_all_but_last(self):
        kept = baselines.cutoff_t3(ranking_of([0.8, 0.8, 0.8, 0.2]))
        assert kept == {"R1", "R2", "R3"}

    def test_result_is_nonempty_prefix(self):
        rng = random.Random(6)
        for _ in range(100):
            scores = sorted((rng.random() for _ in range(rng.randrange(2, 12))), reverse=True)
            r = ranking_of(scores)
            kept = baselines.cutoff_t3(r)
            ids = r.ids()
            assert kept and kept == set(ids[: len(kept)])


def test_cutoffs_depend_only_on_sorted_scores():
    scores = [0.9, 0.7, 0.7, 0.2]
    a = ranking_of(scores)
    b = SimilarityRanking(entries=tuple((f"Q{i}", s) for i, s in enumerate(scores)))
    for cutoff in (baselines.cutoff_t2, baselines.cutoff_t3):
        assert len(cutoff(a)) == len(cutoff(b))


class TestIterativeBaseline:
    def setup_method(self):
        self.ds = small_dataset(
            ["first capability", "second capability", "third capability"]
        )
        self.spec = prompt_by_id("P1")
        self.catalog = load_catalog(domain="Small")

    def test_one_call_per_requirement(self):
        backend = RouterBackend([(lambda p: True, "nothing impacted")])
        trace = []
        result = baselines.iterative_baseline(
            self.ds.rationales[0], self.ds, self.spec, self.catalog,
            backend, model="m", trace=trace,
        )
        assert len(trace) == 3
        assert len(backend.requests) == 3
        assert result.ids() == []

    def test_single_positive(self):
        backend = RouterBackend(
            [
                (lambda p: "R2:" in p, impact_lines([("R2", "matches")])),
                (lambda p: True, "no impact found"),
            ]
        )
        result = baselines.iterative_baseline(
            self.ds.rationales[0], self.ds, self.spec, self.catalog, backend, model="m"
        )
        assert result.ids() == ["R2"]


class TestCotBaseline:
    def setup_method(self):
        self.ds = small_dataset(
            [
                "alpha module interface",
                "beta replacement procedure",
                "unrelated reporting dashboard",
                "alpha and beta integration",
            ]
        )
        self.catalog = load_catalog(domain="Small")
        self.embedder = baselines.HashingEmbedder(dim=128)

    def test_k_limits_pair_prompts(self):
        backend = RouterBackend([(lambda p: True, "Answer: no")])
        trace = []
        baselines.cot_baseline(
            self.ds.rationales[0], self.ds, 2, self.embedder, backend,
            self.catalog, model="m", trace=trace,
        )
        assert len(trace) == 2

    def test_k_equal_to_corpus_keeps_answers_subset(self):
        backend = RouterBackend([(lambda p: True, "yes, clearly linked")])
        result = baselines.cot_baseline(
            self.ds.rationales[0], self.ds, self.ds.n_req, self.embedder, backend,
            self.catalog, model="m",
        )
        assert set(result.ids()) <= {r.id for r in self.ds.requirements}
        assert len(result) == self.ds.n_req

    def test_bad_k_rejected(self):
        backend = RouterBackend([(lambda p: True, "yes")])
        with pytest.raises(ValueError):
            baselines.cot_baseline(
                self.ds.rationales[0], self.ds, 0, self.embedder, backend,
                self.catalog, model="m",
            )

    def test_grid_search_matches_brute_force(self):
        ds = Dataset(
            name=self.ds.name,
            requirements=self.ds.requirements,
            rationales=self.ds.rationales,
            gold=(GoldImpact(rationale_id="C1", impacted_ids=frozenset({"R1", "R4"})),),
        )
        # answer yes only for requirements mentioning alpha
        backend = RouterBackend(
            [
                (lambda p: "alpha" in p, "yes"),
                (lambda p: True, "no"),
            ]
        )
        grid = [1, 2, 3, 4]
        best_k, best_f2 = baselines.cot_grid_search(
            ds, grid, self.embedder, backend, self.catalog, model="m"
        )

        # brute force over the same grid with independent metric arithmetic
        from reqimpact.metrics import confusion, prf2

        scores = {}
        for k in grid:
            result = baselines.cot_baseline(
                ds.rationales[0], ds, k, self.embedder, backend, self.catalog, model="m"
            )
            scores[k] = prf2(confusion(result.ids(), ds.gold_for("C1")))[2]
        expected_best = min([k for k in grid if scores[k] == max(scores.values())])
        assert best_k == expected_best
        assert best_f2 == pytest.approx(max(scores.values()))
