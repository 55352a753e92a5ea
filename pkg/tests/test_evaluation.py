import numpy as np
import pytest

from advlab.attacks import CwConfig, PgdConfig, pgd_attack
from advlab.errors import ContractError, LogConsistencyError, LogParseError
from advlab.evaluation import (
    DatasetItem,
    LabeledDataset,
    TransferRecord,
    collection_report,
    filter_commonly_correct,
    is_untargeted_transfer,
    run_transfer_study,
    topk_misclassification,
    transfer_matrix,
)
from advlab.hierarchy import bundled_hierarchy_path, load_hierarchy
from advlab.models import ModelSpec, TrainedModel, predict, train
from advlab.reportio import export_prediction_log, ingest_prediction_log
from advlab.synthdata import hierarchical_gaussian

import oracles


def make_records(rows):
    return [TransferRecord(**row) for row in rows]


@pytest.fixture(scope="module")
def zoo():
    ds = hierarchical_gaussian(25, seed=42, stream=1)
    models = [train(ModelSpec(f"m{i}", 8, h, 8, seed=50 + i), ds,
                    epochs=60, lr=0.3, batch_size=32)
              for i, h in enumerate([(16,), (24, 12), (32,)])]
    sources = hierarchical_gaussian(6, seed=42, stream=2)
    return models, filter_commonly_correct(sources, models)


@pytest.fixture(scope="module")
def fixture_tree():
    return load_hierarchy(str(bundled_hierarchy_path("fixture")))


# ---------------------------------------------------------------------------
# records


def test_record_invariants():
    r = TransferRecord(item_id="a", true_class=1, source_model="s", attack="PGD",
                       target_model="t", clean_top_k=(1, 2, 3), adv_pred=2)
    assert r.untargeted_success
    assert not r.targeted_success
    same = TransferRecord(item_id="a", true_class=1, source_model="s", attack="PGD",
                          target_model="t", clean_top_k=(1, 2, 3), adv_pred=1)
    assert not same.untargeted_success
    hit = TransferRecord(item_id="a", true_class=1, source_model="s", attack="CW",
                         target_model="t", clean_top_k=(1, 2), adv_pred=4, target_class=4)
    assert hit.targeted_success
    assert not is_untargeted_transfer(hit)


def test_record_rejects_bad_topk_and_attack():
    with pytest.raises(ContractError):
        TransferRecord(item_id="a", true_class=1, source_model="s", attack="PGD",
                       target_model="t", clean_top_k=(2, 1), adv_pred=0)
    with pytest.raises(ContractError):
        TransferRecord(item_id="a", true_class=1, source_model="s", attack="FGSM",
                       target_model="t", clean_top_k=(1,), adv_pred=0)


# ---------------------------------------------------------------------------
# filtering


def test_filter_single_perfect_model(zoo):
    models, _ = zoo
    ds = hierarchical_gaussian(4, seed=9, stream=5)
    relabeled = LabeledDataset(
        items=[DatasetItem(it.item_id, it.x, predict(models[0], it.x, 1).top_class)
               for it in ds.items],
        num_classes=8)
    assert len(filter_commonly_correct(relabeled, models[:1])) == len(relabeled)


def test_filter_removes_marked_item(zoo):
    models, filtered = zoo
    items = list(filtered.items[:5])
    bad = DatasetItem("wrong7", items[0].x, (items[0].true_class + 1) % 8)
    ds = LabeledDataset(items=items + [bad], num_classes=8)
    kept = filter_commonly_correct(ds, models)
    assert "wrong7" not in {it.item_id for it in kept.items}
    assert {it.item_id for it in kept.items} == {it.item_id for it in items}


def test_filter_matches_brute_force(zoo):
    models, _ = zoo
    ds = hierarchical_gaussian(8, seed=77, stream=6)
    kept = filter_commonly_correct(ds, models)
    expected = {it.item_id for it in ds.items
                if all(predict(m, it.x, 1).top_class == it.true_class for m in models)}
    assert {it.item_id for it in kept.items} == expected


def test_filter_empty_result_carries_note(zoo):
    models, _ = zoo
    ds = LabeledDataset(
        items=[DatasetItem("x0", np.full(8, 0.5), 0), DatasetItem("x1", np.full(8, 0.5), 1)],
        num_classes=8)
    kept = filter_commonly_correct(ds, models)
    if len(kept) == 0:
        assert kept.note


# ---------------------------------------------------------------------------
# transfer study


def test_study_record_count_matches_recount_oracle(zoo):
    models, filtered = zoo
    sub = LabeledDataset(items=list(filtered.items[:12]), num_classes=8)
    cfgs = [PgdConfig(epsilon=38 / 255, max_iters=50), CwConfig(kappa=20.0, max_iters=120)]
    records = run_transfer_study(sub, models, cfgs, top_k_depth=5)

    from advlab.attacks import cw_attack

    expected = 0
    for cfg, fn in ((cfgs[0], pgd_attack), (cfgs[1], cw_attack)):
        for model in models:
            for item in sub.items:
                if fn(model, item.x, item.true_class, cfg).success:
                    expected += len(models)
    assert len(records) == expected
    assert records == sorted(records, key=lambda r: (r.item_id, r.source_model,
                                                     r.attack, r.target_model))


def test_study_epsilon_zero_yields_no_records(zoo):
    models, filtered = zoo
    sub = LabeledDataset(items=list(filtered.items[:6]), num_classes=8)
    records = run_transfer_study(sub, models, [PgdConfig(epsilon=0.0, max_iters=5)])
    assert records == []


def test_study_duplicate_models_transfer_everywhere(zoo):
    models, filtered = zoo
    twin = TrainedModel(spec=ModelSpec("twin", 8, models[0].spec.hidden_dims, 8, seed=0),
                        weights=models[0].weights, biases=models[0].biases)
    sub = LabeledDataset(items=list(filtered.items[:8]), num_classes=8)
    records = run_transfer_study(sub, [models[0], twin], [PgdConfig(epsilon=38 / 255, max_iters=50)])
    for r in records:
        assert r.untargeted_success


def test_study_clean_topk_uses_target_model(zoo):
    models, filtered = zoo
    sub = LabeledDataset(items=list(filtered.items[:4]), num_classes=8)
    records = run_transfer_study(sub, models, [PgdConfig(epsilon=38 / 255, max_iters=50)],
                                 top_k_depth=4)
    by_name = {m.name: m for m in models}
    for r in records:
        clean = predict(by_name[r.target_model], next(it.x for it in sub.items
                                                      if it.item_id == r.item_id), 4)
        assert r.clean_top_k == tuple(c for c, _ in clean.top_k)


def test_study_targeted_rule(zoo):
    models, filtered = zoo
    sub = LabeledDataset(items=list(filtered.items[:6]), num_classes=8)
    records = run_transfer_study(sub, models, [PgdConfig(epsilon=38 / 255, max_iters=50)],
                                 target_rule=lambda k, m: (k + 1) % m)
    assert records, "strong budget should produce targeted white-box successes"
    for r in records:
        assert r.target_class == (r.true_class + 1) % 8


def test_study_jobs_parallel_matches_serial(zoo):
    models, filtered = zoo
    sub = LabeledDataset(items=list(filtered.items[:6]), num_classes=8)
    cfgs = [PgdConfig(epsilon=38 / 255, max_iters=50)]
    assert run_transfer_study(sub, models, cfgs) == run_transfer_study(sub, models, cfgs, jobs=4)


def test_study_needs_two_models(zoo):
    models, filtered = zoo
    with pytest.raises(ContractError):
        run_transfer_study(filtered, models[:1], [PgdConfig(epsilon=0.1)])


# ---------------------------------------------------------------------------
# log round trip


def test_log_round_trip(tmp_path, zoo):
    models, filtered = zoo
    sub = LabeledDataset(items=list(filtered.items[:6]), num_classes=8)
    records = run_transfer_study(sub, models, [PgdConfig(epsilon=38 / 255, max_iters=50),
                                               CwConfig(kappa=20.0, max_iters=120)])
    path = tmp_path / "log.csv"
    export_prediction_log(records, path)
    assert ingest_prediction_log(path) == records
    # byte-stable: export(ingest(export(x))) == export(x)
    path2 = tmp_path / "log2.csv"
    export_prediction_log(ingest_prediction_log(path), path2)
    assert path.read_bytes() == path2.read_bytes()


def test_ingest_reports_line_numbers(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text(
        "item_id,true_class,source_model,attack,target_model,clean_top_k,adv_pred,target_class\n"
        "a,1,s,PGD,t,1;2;3,2,\n"
        "b,1,s,PGD,t,2;1;3,0,\n",
        encoding="utf-8")
    with pytest.raises(LogConsistencyError, match="line 3"):
        ingest_prediction_log(path)

    path.write_text(
        "item_id,true_class,source_model,attack,target_model,clean_top_k,adv_pred,target_class\n"
        "a,1,s,PGD,t,1;2;3,x,\n",
        encoding="utf-8")
    with pytest.raises(LogParseError, match="line 2"):
        ingest_prediction_log(path)

    path.write_text("nope\n", encoding="utf-8")
    with pytest.raises(LogParseError, match="line 1"):
        ingest_prediction_log(path)


def test_ingest_synthetic_log_matches_generator(tmp_path):
    rows = oracles.synth_log(10_000, seed=3)
    records = make_records(rows)
    path = tmp_path / "big.csv"
    export_prediction_log(records, path)
    again = ingest_prediction_log(path)
    assert again == records
    assert sum(1 for r in again if r.untargeted_success) == sum(
        1 for row in rows if row["adv_pred"] != row["true_class"])


# ---------------------------------------------------------------------------
# transfer matrix


def test_matrix_counts_match_oracle():
    records = make_records(oracles.synth_log(4000, seed=11, targeted_share=0.3))
    for attack in ("PGD", "CW"):
        for mode in ("untargeted", "targeted"):
            matrix = transfer_matrix(records, attack, mode)
            want = oracles.naive_matrix_counts(records, attack, mode)
            for s in matrix.models:
                for t in matrix.models:
                    assert matrix.count(s, t) == want.get((s, t), 0)


def test_matrix_conservation():
    records = make_records(oracles.synth_log(3000, seed=13))
    matrix = transfer_matrix(records, "PGD", "untargeted")
    total = sum(1 for r in records if r.attack == "PGD" and is_untargeted_transfer(r))
    assert sum(n for _, _, n in matrix.cells()) == total


def test_matrix_attempted_and_percentage():
    records = make_records([
        dict(item_id=f"i{j}", true_class=0, source_model="s", attack="PGD",
             target_model="s", clean_top_k=(0, 1), adv_pred=1) for j in range(8)])
    matrix = transfer_matrix(records, "PGD", "untargeted", attempted=10)
    assert matrix.models == ("s",)
    assert matrix.count("s", "s") == 8
    assert matrix.percentage("s", "s") == pytest.approx(80.0)
    # fallback attempted: distinct items seen
    assert transfer_matrix(records, "PGD", "untargeted").percentage("s", "s") == pytest.approx(100.0)


def test_matrix_offdiagonal_bounded_by_diagonal(zoo):
    models, filtered = zoo
    sub = LabeledDataset(items=list(filtered.items[:10]), num_classes=8)
    records = run_transfer_study(sub, models, [PgdConfig(epsilon=38 / 255, max_iters=50)])
    matrix = transfer_matrix(records, "PGD", "untargeted", attempted=len(sub))
    for s in matrix.models:
        for t in matrix.models:
            assert matrix.count(s, t) <= matrix.count(s, s)


def test_matrix_unknown_attack_is_lookup_error():
    records = make_records(oracles.synth_log(10, seed=1))
    with pytest.raises(KeyError):
        transfer_matrix(records, "FGSM", "untargeted")


def test_matrix_duplicate_zoo_offdiag_equals_diag(zoo):
    models, filtered = zoo
    twin = TrainedModel(spec=ModelSpec("twin", 8, models[0].spec.hidden_dims, 8, seed=0),
                        weights=models[0].weights, biases=models[0].biases)
    sub = LabeledDataset(items=list(filtered.items[:8]), num_classes=8)
    records = run_transfer_study(sub, [models[0], twin], [PgdConfig(epsilon=38 / 255, max_iters=50)])
    matrix = transfer_matrix(records, "PGD", "untargeted", attempted=len(sub))
    assert matrix.count("m0", "twin") == matrix.count("m0", "m0")
    assert matrix.count("twin", "m0") == matrix.count("twin", "twin")


# ---------------------------------------------------------------------------
# top-K


def test_topk_full_depth_rate_is_one():
    rows = oracles.synth_log(500, seed=17, num_classes=6, depth=6)
    records = make_records(rows)
    report = topk_misclassification(records, 6)
    assert report.total > 0
    assert report.rate == 1.0


def test_topk_all_outside_is_zero():
    records = make_records([
        dict(item_id=f"i{j}", true_class=0, source_model="s", attack="PGD",
             target_model="t", clean_top_k=(0, 1, 2), adv_pred=5) for j in range(20)])
    assert topk_misclassification(records, 3).rate == 0.0


def test_topk_matches_brute_force():
    records = make_records(oracles.synth_log(500, seed=19))
    for k in (2, 3, 4, 5):
        report = topk_misclassification(records, k)
        hits, total, per_class = oracles.naive_topk(records, k)
        assert (report.hits, report.total) == (hits, total)
        assert report.per_class == per_class


def test_topk_rates_monotone_in_k():
    records = make_records(oracles.synth_log(2000, seed=23))
    rates = [topk_misclassification(records, k).rate for k in (2, 3, 4, 5)]
    assert all(a <= b for a, b in zip(rates, rates[1:]))


def test_topk_k_bounds():
    records = make_records(oracles.synth_log(50, seed=29))
    with pytest.raises(ContractError):
        topk_misclassification(records, 1)
    with pytest.raises(ContractError):
        topk_misclassification(records, 6)


# ---------------------------------------------------------------------------
# collection report


def test_collection_report_root_is_total(fixture_tree):
    records = make_records(oracles.synth_log(3000, seed=31))
    rows = collection_report(records, fixture_tree, "all")
    root = rows[0]
    assert root.path == "" and root.name == "all"
    assert root.intra_count == root.adv_examples
    assert root.intra_pct == pytest.approx(100.0)


def test_collection_report_matches_doc_oracle(fixture_tree):
    import json

    doc = json.loads(bundled_hierarchy_path("fixture").read_text())
    records = make_records(oracles.synth_log(3000, seed=37))
    rows = collection_report(records, fixture_tree, "all")
    want = oracles.naive_collection_rows(records, doc)
    assert len(rows) == len(want)
    for row in rows:
        w = want[row.path]
        assert row.classes_in_collection == w["classes"]
        assert row.source_images == w["sources"]
        assert row.adv_examples == w["adv"]
        assert row.intra_count == w["intra"]
        assert row.topk_hits == w["topk"]


def test_collection_report_nesting_monotonicity(fixture_tree):
    records = make_records(oracles.synth_log(2000, seed=41))
    rows = {r.path: r for r in collection_report(records, fixture_tree, "all")}
    for child, parent in [("1.1", "1"), ("1.2", "1"), ("2.1", "2"), ("2.2", "2"),
                          ("1", ""), ("2", "")]:
        assert rows[parent].adv_examples >= rows[child].adv_examples
        assert rows[parent].intra_count >= rows[child].intra_count


def test_collection_report_empty_collection_renders_dash(fixture_tree):
    from advlab.reportio import fmt_pct

    records = make_records([
        dict(item_id="i0", true_class=0, source_model="s", attack="PGD",
             target_model="t", clean_top_k=(0, 1, 2, 3, 4), adv_pred=1)])
    rows = {r.path: r for r in collection_report(records, fixture_tree, "all")}
    beta = rows["2"]
    assert beta.adv_examples == 0 and beta.source_images == 0
    assert beta.intra_pct is None
    assert fmt_pct(beta.intra_pct) == "—"


def test_collection_report_source_counts_override(fixture_tree):
    records = make_records(oracles.synth_log(200, seed=43))
    counts = {c: 10 for c in range(8)}
    rows = collection_report(records, fixture_tree, "all", source_class_counts=counts)
    by_path = {r.path: r for r in rows}
    assert by_path[""].source_images == 80
    assert by_path["1"].source_images == 40
    assert by_path["1.1"].source_images == 20


def test_collection_report_named_subset(fixture_tree):
    records = make_records(oracles.synth_log(300, seed=47))
    rows = collection_report(records, fixture_tree, ["beta", "alpha"])
    assert [r.name for r in rows] == ["alpha", "beta"]
    with pytest.raises(KeyError):
        collection_report(records, fixture_tree, ["gamma"])


def test_collection_report_percentages_recomputable(fixture_tree):
    records = make_records(oracles.synth_log(1500, seed=53))
    for row in collection_report(records, fixture_tree, "all"):
        if row.adv_examples:
            assert row.intra_pct == pytest.approx(100.0 * row.intra_count / row.adv_examples)
            for k in (3, 5):
                assert row.topk_pct(k) == pytest.approx(100.0 * row.topk_hits[k] / row.adv_examples)
            assert row.topk_pct(3) <= row.topk_pct(5)
