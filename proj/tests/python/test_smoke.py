#!/usr/bin/env python3
"""Smoke tests for the prefroute Python module.

Run directly (no pytest needed):
    python3 test_smoke.py --module-dir <dir-with-_prefroute.so> --package-dir <repo>/python
"""

import argparse
import json
import math
import os
import sys
import tempfile


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--module-dir", default="")
    parser.add_argument("--package-dir", default="")
    args = parser.parse_args()
    if args.module_dir:
        sys.path.insert(0, args.module_dir)
    if args.package_dir:
        sys.path.insert(0, args.package_dir)

    import prefroute as pr

    # --- metric sanity -----------------------------------------------------
    assert pr.rouge_l(["the", "cat", "sat"], ["the", "cat", "sat"]) == 1.0
    assert abs(pr.rouge_l(["the", "cat", "sat"], ["the", "cat", "ran"]) - 2 / 3) < 1e-9
    assert abs(pr.cosine_similarity([1.0, 0.0], [0.0, 1.0])) < 1e-12
    assert abs(pr.entity_iou({"paris", "france"}, {"paris", "berlin"}) - 1 / 3) < 1e-12
    assert abs(pr.bert_score([[1.0, 0.0]] * 2, [[2.0, 0.0]] * 4, True) - 0.5) < 1e-9
    assert pr.spearman([1, 2, 3, 4], [4, 3, 2, 1]) == -1.0
    assert pr.spearman([1, 1, 1], [1, 2, 3]) is None
    assert abs(pr.rmse([0.0, 0.0], [3.0, 4.0]) - math.sqrt(12.5)) < 1e-9
    assert pr.tokenize("The cat, sat!") == ["the", "cat", "sat"]

    report = pr.agreement(["A", "B", "A", "B"], ["A", "B", "B", "B"])
    assert report["n"] == 4
    assert abs(report["percent_agreement"] - 0.75) < 1e-12

    assert pr.binarize_aspects(
        dict(helpfulness=4, correctness=4, coherence=4, complexity=4, verbosity=0),
        dict(helpfulness=0, correctness=0, coherence=0, complexity=0, verbosity=0),
    ) == "A"
    assert pr.binarize_aspects(
        dict(helpfulness=1, correctness=1, coherence=1, complexity=1, verbosity=1),
        dict(helpfulness=1, correctness=1, coherence=1, complexity=1, verbosity=1),
    ) == "tie"

    # --- synthetic data and the core pipeline -------------------------------
    data = pr.synth_dataset(n=200, n_dims=6, seed=5)
    assert len(data.dataset) == 200
    assert len(data.vocabulary) <= 18
    assert data.dataset.fingerprint == pr.synth_dataset(n=200, n_dims=6, seed=5).dataset.fingerprint

    filtered = pr.filter_ties(data.dataset)
    assert len(filtered) == 200  # synthetic data has no ties
    sub = pr.subsample(data.dataset, 50, seed=9)
    assert len(sub) == 50

    candidates = pr.generate_candidate_set(
        data.index, data.assignments, data.vocabulary,
        dataset_size=len(data.dataset), count=60, include_endpoints=True, seed=3)
    sizes = {r.realized_size for r in candidates.records}
    assert 0 in sizes and 200 in sizes  # endpoints present

    # --- round trips through files ------------------------------------------
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "ds.jsonl")
        pr.save_dataset(data.dataset, path)
        again = pr.load_dataset(path)
        assert again.fingerprint == data.dataset.fingerprint

    # --- fit + route with transparent linear scores --------------------------
    # Bin counts within one dimension sum to the subset size, so the design is
    # rank-deficient; the minimum-norm fit still reproduces every training
    # score exactly.
    w0 = 0.002
    for i, record in enumerate(candidates.records):
        candidates.set_performance(i, 0.4 + w0 * record.features.counts[0])
    model = pr.fit_ppm(candidates, data.vocabulary, kind="linear", ridge=0.0)
    for record in candidates.records:
        predicted = model.predict_counts(list(record.features.counts))
        assert abs(predicted - record.performance) < 1e-6
    probe = [0] * len(data.vocabulary)

    routed = pr.route_topk(data.dataset, data.assignments, model, k=40)
    assert routed.budget_realized == 40
    gains = pr.gain_distribution(model, data.assignments)
    assert len(gains) == len(data.dataset)

    simulated = pr.route_simulated(
        data.dataset, data.assignments, data.vocabulary, data.index, model,
        n_sims=50, seed=7)
    assert simulated.predicted_performance is not None
    # The scores reward only the first tag; the winner routes every carrier of
    # it (score ties prefer the smaller subset over all-human).
    first_tag_total = sum(data.vocabulary.tags[0] in a.tags for a in data.assignments)
    assert abs(simulated.predicted_performance - (0.4 + w0 * first_tag_total)) < 1e-9

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "model.json")
        pr.save_model(model, path)
        loaded = pr.load_model(path)
        assert loaded.predict_counts(probe) == model.predict_counts(probe)

    # --- harness: fit quality and determinism --------------------------------
    config = {
        "master_seed": 11,
        "dataset": {"n": 400, "n_dims": 12},
        "oracle": {"kind": "quadratic", "noise_sigma": 0.01},
        "candidates": {"n_train": 120, "n_holdout": 16},
        "models": {"kinds": ["quadratic"], "routing_model": "quadratic"},
        "routing": {"budget_fractions": [0.5], "n_sims": 100},
        "baseline": {"random_draws": 100},
    }
    report = pr.run_end_to_end(config)
    fit = report["fits"]["quadratic"]
    assert fit["n_holdout"] == 16
    assert fit["spearman_rho"] is not None and fit["spearman_rho"] >= 0.9
    assert fit["rmse"] <= 0.02

    again = pr.run_end_to_end(config)
    for doc in (report, again):
        doc.pop("stage_seconds", None)
    assert json.dumps(report, sort_keys=True) == json.dumps(again, sort_keys=True)

    outcome = report["outcomes"][0]
    assert outcome["simulated_score"] >= outcome["random_mean"]

    print("python smoke tests passed")


if __name__ == "__main__":
    main()
