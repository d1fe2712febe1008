"""Acceptance suite: one test per criterion, one printed pass/fail line each.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the lines as they
print. Tolerances are pinned inline next to each assertion.
"""

import contextlib
import itertools
import json

import numpy as np
import pytest
from click.testing import CliRunner

from forestcal import (
    ClassificationTree,
    Forest,
    KMeans,
    LogitRecord,
    NoisyLogitConfig,
    Proposal,
    ResamplingConfig,
    ScoreResult,
    build_geometric_tree,
    build_visual_tree,
    class_aware_nms,
    class_aware_nms_indices,
    class_thresholds,
    evaluate,
    infer_label_tree,
    io,
    kmeans,
    mean_noisy_per_object,
    score_baseline,
    score_forest,
    score_preliminary,
    score_record,
    score_tree,
    survival_stats,
)
from forestcal.cli import main as cli_main
from forestcal.demo import make_demo_dataset

from conftest import make_categories, paired_tree, record_from_probs, single_parent_tree
from test_cluster import brute_force_sse
from test_evaluation import IOU_THRESHOLDS, det, gt, naive_class_ap
from test_nms import nms_reference, random_instance


@contextlib.contextmanager
def criterion(num, name):
    try:
        yield
    except Exception:
        print(f"[acceptance] criterion {num:02d} ({name}): FAIL")
        raise
    print(f"[acceptance] criterion {num:02d} ({name}): PASS")


def random_partition_tree(rng, n, m, tree_id):
    """Every parent non-empty: shuffled round-robin assignment."""
    perm = rng.permutation(n)
    lp = np.empty(n, dtype=np.int64)
    lp[perm] = np.arange(n) % m
    return ClassificationTree(tree_id, tuple(f"p{j}" for j in range(m)), lp)


# -- criterion 1 -------------------------------------------------------------

def test_criterion_1_sedan_worked_example(sedan_tree):
    with criterion(1, "sedan worked example"):
        rec = record_from_probs([0.7, 0.3], {"lex": [0.6, 0.4]})
        prelim = score_preliminary(rec, sedan_tree)
        assert prelim.scores[0] == 0.42          # exact
        tree_result = score_tree(rec, sedan_tree)
        assert abs(tree_result.scores[0] - 7.0 / 9.0) < 1e-12
        assert tree_result.scores[0] > 0.7
        toy = record_from_probs([0.8, 0.2], {"lex": [0.05, 0.95]})
        assert abs(score_preliminary(toy, sedan_tree).scores[0] - 0.04) < 1e-12


# -- criterion 2 -------------------------------------------------------------

def test_criterion_2_calibration_identities():
    with criterion(2, "calibration identities over 1000 random vectors"):
        rng = np.random.default_rng(42)
        plan = [(3, 334), (50, 333), (1203, 333)]
        for n, trials in plan:
            m = max(2, n // 10)
            trees = [random_partition_tree(rng, n, m, f"t{i}") for i in range(2)]
            forest = Forest(trees)
            uniform_tree = paired_tree(n, min(4, n), "uniform")
            triple = Forest([
                ClassificationTree(f"c{i}", trees[0].parent_names, trees[0].leaf_parent)
                for i in range(3)
            ])
            for _ in range(trials):
                fine = rng.uniform(-30.0, 30.0, size=n)
                parents = {t.tree_id: rng.uniform(-30.0, 30.0, size=t.M) for t in trees}
                rec = LogitRecord("r", fine, parents)

                # (a) every normalizing mode sums to 1 within 1e-9
                for mode in ("baseline", "tree", "forest_score", "forest_vote"):
                    res = score_record(rec, forest, mode, "t0" if mode == "tree" else None)
                    assert abs(res.scores.sum() - 1.0) < 1e-9

                # (b) single-parent tree collapses to the baseline
                rec_single = LogitRecord("r", fine, {"single": np.array([rng.uniform(-5, 5)])})
                assert np.allclose(score_tree(rec_single, single_parent_tree(n)).scores,
                                   score_baseline(rec_single).scores, atol=1e-12)

                # (c) uniform parent probabilities collapse to the baseline
                rec_uniform = LogitRecord(
                    "r", fine, {"uniform": np.full(uniform_tree.M, rng.uniform(-5, 5))})
                assert np.allclose(score_tree(rec_uniform, uniform_tree).scores,
                                   score_baseline(rec_uniform).scores, atol=1e-12)

                # (d) path-score label inference equals the score argmax
                assert infer_label_tree(rec, trees[0]) == score_tree(rec, trees[0]).label

                # (e) a forest of identical trees equals the single tree
                rec_triple = LogitRecord("r", fine, {t.tree_id: parents["t0"] for t in triple})
                assert np.allclose(score_forest(rec_triple, triple).scores,
                                   score_tree(rec_triple, triple.trees[0]).scores, atol=1e-12)


# -- criteria 3 and 4 share one synthetic suite -------------------------------

def grid_forest(n=100, m=10):
    idx = np.arange(n)
    row, col = idx // m, idx % m
    diag = (row + col) % m
    return Forest([
        ClassificationTree("rows", tuple(f"r{j}" for j in range(m)), row),
        ClassificationTree("cols", tuple(f"c{j}" for j in range(m)), col),
        ClassificationTree("diag", tuple(f"d{j}" for j in range(m)), diag),
    ])


def noisy_logit_suite(seed, n=100, m=10, n_objects=600):
    """N=100 classes under 10 parents per tree; additive fine-logit noise.

    The corruption is a large spike on a class unrelated to the ground
    truth in every tree (plus background noise and, occasionally, an
    ambiguous same-parent confuser); parent logits are strongly
    informative on the true parent.
    """
    rng = np.random.default_rng(seed)
    forest = grid_forest(n, m)
    lps = [t.leaf_parent for t in forest]
    records = []
    for i in range(n_objects):
        gt_class = int(rng.integers(n))
        unrelated = [c for c in range(n) if all(lp[c] != lp[gt_class] for lp in lps)]
        siblings = [c for c in range(n) if c != gt_class and lps[0][c] == lps[0][gt_class]]
        z = rng.normal(0.0, 0.7, size=n)
        z[gt_class] += 3.5
        z[unrelated[int(rng.integers(len(unrelated)))]] += rng.uniform(5.0, 8.0)
        if rng.random() < 0.15:
            z[siblings[int(rng.integers(len(siblings)))]] += 3.5 + rng.normal(0.0, 0.9)
        parents = {}
        for t in forest:
            zp = rng.normal(0.0, 0.3, size=m)
            zp[t.leaf_parent[gt_class]] += 8.0
            parents[t.tree_id] = zp
        records.append(LogitRecord(f"o{i}", z, parents, gt_class=gt_class))
    return forest, records


def test_criterion_3_noisy_logit_suppression():
    with criterion(3, "forest suppresses noisy logits on synthetic suite"):
        cfg = NoisyLogitConfig(eps_gt=0.1, eps_neg=0.05)
        for seed in (0, 1, 2):
            forest, records = noisy_logit_suite(seed)
            assert len(records) >= 500
            raw = mean_noisy_per_object(records, "raw_fine", cfg)
            calibrated = mean_noisy_per_object(records, "forest", cfg, forest)
            assert calibrated < raw, f"seed {seed}: {calibrated} !< {raw}"


def test_criterion_4_score_distribution_shift():
    with criterion(4, "confidence shift for correct and incorrect splits"):
        for seed in (0, 1, 2):
            forest, records = noisy_logit_suite(seed)
            base_correct, base_wrong, forest_correct, forest_wrong = [], [], [], []
            for rec in records:
                b = score_baseline(rec)
                f = score_forest(rec, forest)
                (base_correct if b.label == rec.gt_class else base_wrong).append(b.max_score)
                (forest_correct if f.label == rec.gt_class else forest_wrong).append(f.max_score)
            for split in (base_correct, base_wrong, forest_correct, forest_wrong):
                assert split, f"seed {seed}: a split is empty"
            assert np.mean(forest_correct) - np.mean(base_correct) > 0.0
            assert np.mean(base_wrong) - np.mean(forest_wrong) > 0.0


# -- criterion 5 -------------------------------------------------------------

def test_criterion_5_nms_oracle():
    with criterion(5, "class-aware NMS equals quadratic reference"):
        rng = np.random.default_rng(7)
        for _ in range(1000):
            boxes, scores, classes, thresholds = random_instance(rng)
            got = class_aware_nms_indices(boxes, scores, classes, thresholds, 0.7)
            want = nms_reference(boxes, scores, classes, thresholds, 0.7)
            assert got == want
            assert set(got) == set(want)
        # All-equal thresholds reduce to standard single-threshold NMS.
        for _ in range(300):
            boxes, scores, classes, _ = random_instance(rng)
            flat = {c: 0.6 for c in range(3)}
            got = class_aware_nms_indices(boxes, scores, classes, flat, 0.6)
            want = nms_reference(boxes, scores, [0] * len(scores), {0: 0.6})
            assert got == want


# -- criterion 6 -------------------------------------------------------------

def test_criterion_6_threshold_schemes():
    with criterion(6, "discrete and linear threshold schemes"):
        from forestcal import FrequencyGroup, threshold_discrete

        discrete = ResamplingConfig(scheme="discrete")
        assert threshold_discrete(FrequencyGroup.FREQUENT, discrete) == 0.7
        assert threshold_discrete(FrequencyGroup.COMMON, discrete) == 0.8
        assert threshold_discrete(FrequencyGroup.RARE, discrete) == 0.9

        # Categories spanning all groups, including both group extremes.
        cfs = [900, 500, 200, 101, 100, 60, 30, 11, 10, 6, 3, 1]
        categories = make_categories(cfs)
        linear = ResamplingConfig(scheme="linear")
        thresholds = class_thresholds(categories, linear)
        values = [thresholds[c.id] for c in categories]
        assert all(0.65 <= v <= 0.95 for v in values)
        # Monotone non-increasing in cf within each group.
        for group_ids in ([0, 1, 2, 3], [4, 5, 6, 7], [8, 9, 10, 11]):
            group_vals = [thresholds[i] for i in group_ids]
            assert group_vals == sorted(group_vals)
        assert thresholds[0] == 0.65    # most frequent class, exact
        assert thresholds[11] == 0.95   # least frequent rare class, exact


# -- criterion 7 -------------------------------------------------------------

def test_criterion_7_rebalancing_effect():
    with criterion(7, "tail classes keep more proposals"):
        # Identical overlap structure per class: a pair at IoU 0.75 plus a
        # far singleton, laid out on a long-tailed category set.
        categories = make_categories([500, 200, 60, 30, 5, 2])
        proposals = []
        for cls in range(6):
            ox = 100.0 * cls
            proposals.extend([
                Proposal(np.array([ox, 0.0, ox + 4.0, 7.0]), 0.9, cls),
                Proposal(np.array([ox, 1.0, ox + 4.0, 8.0]), 0.8, cls),
                Proposal(np.array([ox + 50.0, 0.0, ox + 54.0, 7.0]), 0.7, cls),
            ])
        from forestcal import iou

        pair_iou = iou(proposals[0].box, proposals[1].box)
        assert 0.7 < pair_iou <= 0.9
        thresholds = class_thresholds(categories, ResamplingConfig(scheme="discrete"))
        kept = class_aware_nms(proposals, thresholds, 0.7)
        stats = survival_stats(proposals, kept, categories)
        rare_ratio = stats["rare"]["kept"] / stats["rare"]["input"]
        frequent_ratio = stats["frequent"]["kept"] / stats["frequent"]["input"]
        assert rare_ratio >= frequent_ratio
        assert rare_ratio > frequent_ratio      # strict: pair IoU in (0.7, 0.9]


# -- criterion 8 -------------------------------------------------------------

def test_criterion_8_evaluator_oracle():
    with criterion(8, "evaluator equals brute-force micro-evaluator"):
        categories = make_categories([500, 5])
        rng = np.random.default_rng(21)
        for _ in range(500):
            n_det = int(rng.integers(0, 6))
            n_gt = int(rng.integers(1, 4))
            gts = []
            for _ in range(n_gt):
                x, y = rng.uniform(0, 20, 2)
                gts.append(gt(f"im{int(rng.integers(2))}",
                              [x, y, x + rng.uniform(4, 15), y + rng.uniform(4, 15)],
                              int(rng.integers(2))))
            dets = []
            for _ in range(n_det):
                if gts and rng.random() < 0.6:
                    base = gts[int(rng.integers(len(gts)))]
                    delta = rng.uniform(-3, 3, 4)
                    box = [base.box[0] + delta[0], base.box[1] + delta[1],
                           max(base.box[2] + delta[2], base.box[0] + delta[0] + 0.1),
                           max(base.box[3] + delta[3], base.box[1] + delta[1] + 0.1)]
                    cls = base.class_id if rng.random() < 0.8 else int(rng.integers(2))
                    image = base.image_id
                else:
                    x, y = rng.uniform(0, 25, 2)
                    box = [x, y, x + rng.uniform(3, 10), y + rng.uniform(3, 10)]
                    cls = int(rng.integers(2))
                    image = f"im{int(rng.integers(2))}"
                dets.append(det(image, box, cls, float(np.round(rng.uniform(0, 1), 2))))

            report = evaluate(dets, gts, categories)
            naive = {
                cls: {thr: naive_class_ap(dets, gts, cls, thr) for thr in IOU_THRESHOLDS}
                for cls in sorted({g.class_id for g in gts})
            }
            naive_per_class = {cls: float(np.mean(list(v.values()))) for cls, v in naive.items()}
            assert report.per_class_ap.keys() == naive_per_class.keys()
            for cls, ap in naive_per_class.items():
                assert abs(report.per_class_ap[cls] - ap) < 1e-12
            assert abs(report.ap - np.mean(list(naive_per_class.values()))) < 1e-12
            for thr, field in ((0.5, report.ap50), (0.75, report.ap75)):
                want = float(np.mean([naive[cls][thr] for cls in naive]))
                assert abs(field - want) < 1e-12
            for group_field, cls_id in ((report.ap_f, 0), (report.ap_r, 1)):
                if cls_id in naive_per_class:
                    assert abs(group_field - naive_per_class[cls_id]) < 1e-12
                else:
                    assert group_field is None

        # Perfect detections give AP exactly 1.
        gts = [gt("i", [0, 0, 10, 10], 0), gt("i", [30, 30, 50, 50], 1)]
        dets = [det(g.image_id, g.box, g.class_id, 0.9) for g in gts]
        assert evaluate(dets, gts, categories).ap == 1.0


# -- criterion 9 -------------------------------------------------------------

def test_criterion_9_kmeans_protocol():
    with criterion(9, "k-means determinism, optimality, default tree sizes"):
        rng = np.random.default_rng(11)
        fixtures = [
            np.array([[0.0, 0.0], [0.0, 1.0], [10.0, 10.0], [10.0, 11.0]]),
            rng.normal(size=(40, 6)),
            np.concatenate([rng.normal(0, 0.3, (6, 2)), rng.normal(9, 0.3, (4, 2))]),
            np.array([[0.0, 0.0]] * 5 + [[5.0, 5.0]]),
        ]
        for i, table in enumerate(fixtures):
            for k in (1, 2, min(4, table.shape[0])):
                est = KMeans(k, random_state=i).fit(table)
                assert (np.diff(est.inertia_history_) <= 1e-9).all()

        # K=2 equals the exhaustive-partition optimum on separated fixtures.
        for table in (fixtures[0], fixtures[2]):
            _, _, objective = kmeans(table, 2, random_state=0)
            assert objective == pytest.approx(brute_force_sse(table, 2), abs=1e-9)

        # Fixed seed: bit-identical trees across runs.
        features = rng.normal(size=(30, 5))
        t1 = build_visual_tree(features, 6, random_state=3)
        t2 = build_visual_tree(features, 6, random_state=3)
        assert t1 == t2
        masks = [[(rng.random((9, 9)) > 0.5).astype(np.uint8)] for _ in range(55)]
        g1 = build_geometric_tree(masks, 5, grid_size=(8, 8), random_state=3)
        g2 = build_geometric_tree(masks, 5, grid_size=(8, 8), random_state=3)
        assert g1 == g2

        # Default parent counts.
        assert build_visual_tree(rng.normal(size=(30, 4))).M == 25
        assert build_geometric_tree(masks, grid_size=(8, 8)).M == 50


# -- criterion 10 ------------------------------------------------------------

def test_criterion_10_determinism_and_round_trips(tmp_path):
    with criterion(10, "pipeline determinism and format round-trips"):
        demo = make_demo_dataset(tmp_path / "demo", seed=0)
        runner = CliRunner()
        args = ["pipeline",
                "--records", str(demo["records"]),
                "--categories", str(demo["categories"]),
                "--tree", str(demo["tree_lexical"]),
                "--tree", str(demo["tree_visual"]),
                "--tree", str(demo["tree_geometric"]),
                "--detections", str(demo["detections"]),
                "--gt", str(demo["ground_truth"])]
        for out in ("run1", "run2"):
            result = runner.invoke(cli_main, args + ["--out-dir", str(tmp_path / out)],
                                   catch_exceptions=False)
            assert result.exit_code == 0, result.output
        names = sorted(p.name for p in (tmp_path / "run1").iterdir())
        assert names == sorted(p.name for p in (tmp_path / "run2").iterdir())
        for name in names:
            assert (tmp_path / "run1" / name).read_bytes() == \
                (tmp_path / "run2" / name).read_bytes(), name

        # parse(serialize(x)) == x for every file format.
        rng = np.random.default_rng(5)
        categories = make_categories([500, 40, 3])
        io.write_categories(categories, tmp_path / "c.jsonl")
        assert io.read_categories(tmp_path / "c.jsonl") == categories

        tree = paired_tree(3, 2)
        io.write_tree(tree, tmp_path / "t.json")
        assert io.read_tree(tmp_path / "t.json") == tree

        rec = LogitRecord("o", rng.normal(size=3), {"paired": rng.normal(size=2)},
                          parent_probs={"alt": np.array([0.25, 0.75])}, gt_class=1)
        io.write_logit_records([rec], tmp_path / "r.jsonl")
        loaded = io.read_logit_records(tmp_path / "r.jsonl")[0]
        assert loaded.object_id == rec.object_id and loaded.gt_class == rec.gt_class
        assert np.array_equal(loaded.fine_logits, rec.fine_logits)
        assert np.array_equal(loaded.parent_logits["paired"], rec.parent_logits["paired"])
        assert np.array_equal(loaded.parent_probs["alt"], rec.parent_probs["alt"])

        prop = Proposal(rng.uniform(0, 5, 4) + np.array([0, 0, 10, 10]), 0.5, 1)
        io.write_proposals([("img", prop)], tmp_path / "p.jsonl")
        (img, loaded_prop), = io.iter_proposals(tmp_path / "p.jsonl")
        assert img == "img" and loaded_prop.class_id == prop.class_id
        assert np.array_equal(loaded_prop.box, prop.box) and loaded_prop.score == prop.score

        from forestcal import Detection, GroundTruth

        mask = (rng.random((5, 4)) > 0.5).astype(np.uint8)
        gt_rec = GroundTruth("img", np.array([0.0, 0.0, 4.0, 5.0]), 2, mask=mask)
        io.write_ground_truths([gt_rec], tmp_path / "g.jsonl")
        loaded_gt = io.read_ground_truths(tmp_path / "g.jsonl")[0]
        assert loaded_gt.class_id == 2 and np.array_equal(loaded_gt.mask, mask)
        assert np.array_equal(loaded_gt.box, gt_rec.box)

        det_rec = Detection("img", np.array([1.0, 1.0, 3.0, 4.0]), 0, 0.25, mask=mask)
        io.write_detections([det_rec], tmp_path / "d.jsonl")
        loaded_det = io.read_detections(tmp_path / "d.jsonl")[0]
        assert loaded_det.score == det_rec.score and np.array_equal(loaded_det.mask, mask)
        assert np.array_equal(loaded_det.box, det_rec.box)

        row = ("o", 1, ScoreResult(np.array([0.25, 0.75]), 1, "forest_score"))
        io.write_scores([row], tmp_path / "s.jsonl")
        oid, gtc, res = next(io.iter_scores(tmp_path / "s.jsonl"))
        assert (oid, gtc, res.label, res.mode) == ("o", 1, 1, "forest_score")
        assert np.array_equal(res.scores, row[2].scores)

        table = rng.normal(size=(4, 3))
        for suffix in (".npy", ".txt"):
            io.write_feature_table(table, tmp_path / f"f{suffix}")
            assert np.array_equal(io.read_feature_table(tmp_path / f"f{suffix}"), table)

        pairs = [("b", "x"), ("a", "x"), ("c", "y")]
        io.write_hierarchy(pairs, tmp_path / "h.json")
        assert io.read_hierarchy(tmp_path / "h.json") == pairs

        class_masks = [[(rng.random((4, 6)) > 0.5).astype(np.uint8)] for _ in range(2)]
        io.write_class_masks(class_masks, tmp_path / "m.jsonl")
        loaded_masks = io.read_class_masks(tmp_path / "m.jsonl")
        for got_masks, want_masks in zip(loaded_masks, class_masks):
            assert np.array_equal(got_masks[0], want_masks[0])
