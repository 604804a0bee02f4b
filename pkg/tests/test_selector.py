"""Best-of-n / worst-of-n selection and the diminishing-returns curve."""

import json
import math
import random

import pytest

from finespan.reward import PassageScore
from finespan.scorer import Scorer, Vocabulary
from finespan.selector import Candidate, CandidateSet, curve, score_external, select

from helpers import purple_corpus


def ps(value: float) -> PassageScore:
    return PassageScore((value,), (value,), value)


def cset(scores: dict[str, float], prompt_id: str = "p1") -> CandidateSet:
    return CandidateSet(
        prompt_id,
        tuple(Candidate(cid, f"response {cid}", ps(v)) for cid, v in scores.items()),
    )


THREE = {"a": 0.5, "b": 0.2, "c": 0.9}


class TestSelect:
    def test_best_of_all_is_argmin(self):
        assert select(cset(THREE), n=3, mode="best").id == "b"

    def test_worst_of_all_is_argmax(self):
        assert select(cset(THREE), n=3, mode="worst").id == "c"

    def test_n_one_returns_single_draw_for_both_modes(self):
        for seed in range(5):
            best = select(cset(THREE), n=1, mode="best", seed=seed)
            worst = select(cset(THREE), n=1, mode="worst", seed=seed)
            assert best.id == worst.id

    def test_ties_break_to_smallest_id(self):
        tied = cset({"z": 0.4, "m": 0.4, "q": 0.4})
        assert select(tied, n=3, mode="best").id == "m"
        assert select(tied, n=3, mode="worst").id == "m"

    def test_out_of_range_n_rejected(self):
        with pytest.raises(ValueError):
            select(cset(THREE), n=0, mode="best")
        with pytest.raises(ValueError):
            select(cset(THREE), n=4, mode="best")

    def test_unknown_mode_rejected(self):
        with pytest.raises(ValueError):
            select(cset(THREE), n=2, mode="median")

    def test_seeded_subsets_are_deterministic(self):
        a = select(cset(THREE), n=2, mode="best", seed=9)
        b = select(cset(THREE), n=2, mode="best", seed=9)
        assert a.id == b.id

    def test_nested_subset_monotonicity(self):
        """best over a superset is never worse; worst mirrors with >=."""
        rng = random.Random(12)
        for _ in range(50):
            values = [rng.random() for _ in range(10)]
            candidates = [Candidate(f"c{i:02d}", "", ps(v)) for i, v in enumerate(values)]
            small = candidates[:4]
            large = candidates[:8]
            best_small = min(c.score.value for c in small)
            best_large = min(c.score.value for c in large)
            worst_small = max(c.score.value for c in small)
            worst_large = max(c.score.value for c in large)
            assert best_large <= best_small
            assert worst_large >= worst_small

    def test_best_of_count_equals_global_argmin_randomized(self):
        rng = random.Random(31)
        for trial in range(50):
            scores = {f"c{i:02d}": rng.random() for i in range(rng.randint(1, 12))}
            chosen = select(cset(scores), n=len(scores), mode="best", seed=trial)
            assert chosen.score.value == min(scores.values())

    def test_empty_candidate_set_rejected(self):
        with pytest.raises(ValueError):
            CandidateSet("p", ())

    def test_non_finite_score_rejected(self):
        with pytest.raises(ValueError):
            CandidateSet("p", (Candidate("a", "", ps(float("nan"))),))


class TestCurve:
    def test_constant_scores_have_zero_variance(self):
        sets = [cset({f"c{i}": 0.7 for i in range(8)}, prompt_id=f"p{j}") for j in range(3)]
        result = curve(sets, grid=[1, 2, 4, 8], draws=5, seed=0)
        for point in result.points:
            assert point.mean == pytest.approx(0.7, abs=1e-12)
            assert point.variance == pytest.approx(0.0, abs=1e-12)

    def test_uniform_scores_match_order_statistic(self):
        """E[min of n i.i.d. U(0,1)] = 1/(n+1), within 3 sigma of the MC error."""
        rng = random.Random(5)
        sets = []
        for j in range(120):
            scores = {f"c{i:03d}": rng.random() for i in range(64)}
            sets.append(cset(scores, prompt_id=f"p{j}"))
        result = curve(sets, grid=[1, 4, 16, 64], draws=1, seed=1)
        for point in result.points:
            n = point.n
            expected = 1.0 / (n + 1)
            var_min = n / ((n + 1) ** 2 * (n + 2))
            sigma = math.sqrt(var_min / 120)
            assert abs(point.mean - expected) < 3 * sigma, (n, point.mean, expected)

    def test_mean_non_increasing_in_n(self):
        rng = random.Random(8)
        sets = [
            cset({f"c{i}": rng.random() for i in range(16)}, prompt_id=f"p{j}")
            for j in range(10)
        ]
        result = curve(sets, grid=[1, 2, 4, 8, 16], draws=6, seed=3)
        means = [p.mean for p in result.points]
        assert all(a >= b for a, b in zip(means, means[1:]))

    def test_grid_larger_than_pool_rejected(self):
        sets = [cset({"a": 0.1, "b": 0.2})]
        with pytest.raises(ValueError):
            curve(sets, grid=[4], draws=2)

    def test_csv_shape(self):
        sets = [cset({"a": 0.1, "b": 0.2, "c": 0.3, "d": 0.4})]
        text = curve(sets, grid=[1, 2], draws=2, seed=0).to_csv()
        lines = text.strip().splitlines()
        assert lines[0] == "n,mean,variance"
        assert len(lines) == 3

    def test_variance_decompositions_reported(self):
        rng = random.Random(2)
        sets = [
            cset({f"c{i}": rng.random() for i in range(8)}, prompt_id=f"p{j}")
            for j in range(4)
        ]
        result = curve(sets, grid=[2], draws=8, seed=0)
        point = result.points[0]
        assert point.prompt_variance >= 0 and point.draw_variance >= 0
        # pooled variance = prompt variance of means + mean within-prompt variance
        assert point.variance == pytest.approx(
            point.prompt_variance + point.draw_variance, abs=1e-12
        )


class TestScoreExternal:
    def write_generations(self, path, rows):
        path.write_text("\n".join(json.dumps(r) for r in rows) + "\n", encoding="utf-8")

    def fixture_model(self):
        records = purple_corpus(8)
        vocab = Vocabulary.build([r.prompt for r in records] + [r.response for r in records], 256)
        return Scorer(vocab, embed_dim=5, num_classes=2, seed=6)

    def gen_rows(self):
        rows = []
        for p in ("p1", "p2"):
            for c in ("a", "b", "c", "d"):
                rows.append(
                    {
                        "prompt_id": p,
                        "candidate_id": c,
                        "prompt": "Describe the image.",
                        "response": "The dog sat. A purple elephant floats.",
                    }
                )
        return rows

    def test_groups_by_prompt(self, tmp_path):
        path = tmp_path / "gens.jsonl"
        self.write_generations(path, self.gen_rows())
        sets = score_external(path, self.fixture_model())
        assert [s.prompt_id for s in sets] == ["p1", "p2"]
        assert all(len(s.candidates) == 4 for s in sets)

    def test_empty_file(self, tmp_path):
        path = tmp_path / "gens.jsonl"
        path.write_text("", encoding="utf-8")
        assert score_external(path, self.fixture_model()) == []

    def test_deterministic_across_runs(self, tmp_path):
        path = tmp_path / "gens.jsonl"
        self.write_generations(path, self.gen_rows())
        model = self.fixture_model()
        assert score_external(path, model) == score_external(path, model)

    def test_malformed_line_reports_number(self, tmp_path):
        path = tmp_path / "gens.jsonl"
        path.write_text('{"prompt_id": "p"}\n', encoding="utf-8")
        with pytest.raises(ValueError, match="line 1"):
            score_external(path, self.fixture_model())

    def test_duplicate_candidate_rejected(self, tmp_path):
        rows = self.gen_rows()[:2]
        rows[1]["candidate_id"] = rows[0]["candidate_id"]
        path = tmp_path / "gens.jsonl"
        self.write_generations(path, rows)
        with pytest.raises(ValueError, match="duplicate"):
            score_external(path, self.fixture_model())
