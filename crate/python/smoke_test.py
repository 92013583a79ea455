"""Smoke test of the pyarchsmith extension module."""

import json

import pyarchsmith

SMALL = """
problems = [1, 2]
runs_per_problem = 2
replicates = 2
search_seeds = [0, 1]
budget = 10
samples = 10

[ea]
population = 10
generations = 5
"""


def main():
    archive = pyarchsmith.gen_archive(SMALL)
    assert len(archive.splitlines()) == 2 * 2 * 10 * 5

    model = pyarchsmith.Metamodel.learn(archive, n=5)
    assert model.mode == "joint"
    gans = model.sample(20, seed=3)
    assert gans == model.sample(20, seed=3)
    for gan in gans:
        score = model.score(gan)
        assert score["log_prob"] < 0.0
        assert abs(score["supermodel_term"] + score["submodel_term"] - score["log_prob"]) < 1e-9
        json.loads(gan)

    restored = pyarchsmith.Metamodel.from_json(model.to_json())
    assert all(restored.score(g) == model.score(g) for g in gans)

    h, p = pyarchsmith.kruskal_wallis([[1, 2, 3], [4, 5, 6], [7, 8, 9]])
    assert abs(h - 7.2) < 1e-9 and 0.0 < p < 0.05
    _, p = pyarchsmith.rank_sum([1, 2, 3], [1, 2, 3])
    assert p > 0.9

    csvs = pyarchsmith.run_experiment("guided-search", SMALL)
    assert csvs == pyarchsmith.run_experiment("guided-search", SMALL)
    assert len(csvs["guided_search.csv"].splitlines()) == 1 + 3 * 2 * 10

    try:
        pyarchsmith.run_experiment("nope", SMALL)
    except ValueError:
        pass
    else:
        raise AssertionError("unknown experiment accepted")
    print("smoke test passed")


if __name__ == "__main__":
    main()
