import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lmfcn.anchors import (AnchorTables, InstancePartition, build_anchor_tables,
                           partition, type1_anchors, type2_anchors,
                           type3_anchors)
from lmfcn.geometry import dist_matrix, pairwise_sq_dist
from oracles import anchor_tables_naive, partition_naive


def make_partition(labels, predictions, sv_indices) -> InstancePartition:
    return partition(np.asarray(labels, dtype=np.float64),
                     np.asarray(predictions, dtype=np.float64),
                     np.asarray(sv_indices))


def line_distances(positions):
    """Distance matrix for points on a line; integer gaps stay exact."""
    pos = np.asarray(positions, dtype=np.float64)[:, None]
    return dist_matrix(pairwise_sq_dist(pos))


class TestPartition:
    def test_all_correct_gives_empty_q(self):
        labels = [1, 1, -1, -1, 1]
        part = make_partition(labels, labels, [0, 2])
        assert part.q.size == 0
        np.testing.assert_array_equal(part.r, [1, 3, 4])

    def test_all_nonsv_wrong_gives_empty_r(self):
        labels = np.array([1.0, 1.0, -1.0, -1.0])
        preds = -labels
        part = make_partition(labels, preds, [0])
        assert part.r.size == 0
        np.testing.assert_array_equal(part.q, [1, 2, 3])

    def test_eight_point_hand_case_matches_set_algebra(self):
        labels = np.array([1, 1, 1, 1, -1, -1, -1, -1], dtype=np.float64)
        preds = np.array([1, -1, 1, 1, -1, 1, -1, -1], dtype=np.float64)
        svs = [0, 4, 5]
        part = make_partition(labels, preds, svs)
        s, q, r = partition_naive(labels, preds, svs)
        np.testing.assert_array_equal(part.s, s)
        np.testing.assert_array_equal(part.q, q)
        np.testing.assert_array_equal(part.r, r)

    def test_misclassified_sv_stays_in_s(self):
        labels = np.array([1.0, -1.0, 1.0])
        preds = np.array([-1.0, -1.0, 1.0])  # SV 0 is wrong
        part = make_partition(labels, preds, [0, 1])
        np.testing.assert_array_equal(part.s, [0, 1])
        assert part.q.size == 0
        assert part.n_misclassified_svs == 1

    def test_sets_are_disjoint_and_cover(self):
        rng = np.random.default_rng(0)
        labels = np.where(rng.uniform(size=15) < 0.5, 1.0, -1.0)
        preds = np.where(rng.uniform(size=15) < 0.5, 1.0, -1.0)
        part = make_partition(labels, preds, rng.choice(15, 5, replace=False))
        merged = np.concatenate([part.s, part.q, part.r])
        np.testing.assert_array_equal(np.sort(merged), np.arange(15))


class TestType1:
    def test_unique_nearest_candidate_comes_first(self):
        # positions: sv at 0; same-label correct at 1 and 5; other label at 2
        d = line_distances([0.0, 1.0, 2.0, 5.0])
        labels = np.array([1.0, 1.0, -1.0, 1.0])
        preds = labels.copy()
        part = make_partition(labels, preds, [0])
        rows = type1_anchors(d, part, sv_close=2)
        np.testing.assert_array_equal(rows[0], [1, 3])

    def test_exhausted_candidates_give_empty_row_and_warning(self):
        d = line_distances([0.0, 1.0, 2.0])
        labels = np.array([1.0, 1.0, -1.0])
        part = make_partition(labels, labels, [0, 1])  # all label-1 points are SVs
        with pytest.warns(UserWarning, match="no eligible anchor"):
            rows = type1_anchors(d, part, sv_close=3)
        assert all(row.size == 0 for row in rows)

    def test_misclassified_candidates_excluded(self):
        d = line_distances([0.0, 1.0, 2.0])
        labels = np.array([1.0, 1.0, 1.0])
        preds = np.array([1.0, -1.0, 1.0])  # instance 1 is wrong, skip it
        part = make_partition(labels, preds, [0])
        rows = type1_anchors(d, part, sv_close=1)
        np.testing.assert_array_equal(rows[0], [2])


class TestType2:
    def test_single_sv_is_forced_choice(self):
        d = line_distances([0.0, 3.0, 7.0])
        labels = np.array([1.0, -1.0, -1.0])
        preds = np.array([1.0, 1.0, 1.0])
        part = make_partition(labels, preds, [0])
        rows = type2_anchors(d, part, wr_close=2)
        assert len(rows) == 2
        for row in rows:
            np.testing.assert_array_equal(row, [0])

    def test_equidistant_tie_takes_lower_index(self):
        # q at position 0 with SVs at -2 and +2: exactly tied
        d = line_distances([-2.0, 2.0, 0.0])
        labels = np.array([1.0, -1.0, 1.0])
        preds = np.array([1.0, -1.0, -1.0])
        part = make_partition(labels, preds, [0, 1])
        rows = type2_anchors(d, part, wr_close=1)
        assert d[2, 0] == d[2, 1]
        np.testing.assert_array_equal(rows[0], [0])

    def test_empty_sv_set_rejected(self):
        part = InstancePartition(
            s=np.empty(0, dtype=np.intp), q=np.array([0]), r=np.array([1]),
            labels=np.array([1.0, -1.0]), predictions=np.array([-1.0, -1.0]),
            n_misclassified_svs=0)
        with pytest.raises(ValueError):
            type2_anchors(line_distances([0.0, 1.0]), part, wr_close=1)


class TestType3:
    def test_single_opposite_instance_forced(self):
        d = line_distances([0.0, 1.0, 9.0])
        labels = np.array([1.0, -1.0, 1.0])
        part = make_partition(labels, labels, [2])
        rows = type3_anchors(d, part, sh_close=2)
        np.testing.assert_array_equal(rows[0], [1])  # r=0 pairs with r=1
        np.testing.assert_array_equal(rows[1], [0])

    def test_sh_close_zero_disables_table(self):
        d = line_distances([0.0, 1.0])
        labels = np.array([1.0, -1.0])
        part = make_partition(labels, labels, np.empty(0, dtype=np.intp))
        rows = type3_anchors(d, part, sh_close=0)
        assert all(row.size == 0 for row in rows)

    def test_missing_opposite_label_warns(self):
        d = line_distances([0.0, 1.0])
        labels = np.array([1.0, 1.0])
        part = make_partition(labels, labels, np.empty(0, dtype=np.intp))
        with pytest.warns(UserWarning, match="no opposite-label anchor"):
            rows = type3_anchors(d, part, sh_close=1)
        assert all(row.size == 0 for row in rows)


@st.composite
def random_configurations(draw):
    n = draw(st.integers(2, 20))
    # integer grid latents force plenty of exact distance ties
    latents = np.array(draw(st.lists(
        st.tuples(st.integers(0, 3), st.integers(0, 3)),
        min_size=n, max_size=n)), dtype=np.float64)
    labels = np.array(draw(st.lists(st.sampled_from([-1.0, 1.0]),
                                    min_size=n, max_size=n)))
    preds = np.array(draw(st.lists(st.sampled_from([-1.0, 1.0]),
                                   min_size=n, max_size=n)))
    n_sv = draw(st.integers(1, n))
    svs = draw(st.permutations(range(n)))[:n_sv]
    ks = (draw(st.integers(0, 4)), draw(st.integers(0, 4)), draw(st.integers(0, 4)))
    return latents, labels, preds, np.array(sorted(svs)), ks


class TestAgainstBruteForce:
    def test_random_12_point_configuration(self):
        rng = np.random.default_rng(1)
        latents = rng.integers(0, 4, size=(12, 2)).astype(np.float64)
        labels = np.where(rng.uniform(size=12) < 0.5, 1.0, -1.0)
        preds = np.where(rng.uniform(size=12) < 0.5, 1.0, -1.0)
        svs = np.sort(rng.choice(12, 4, replace=False))
        d = dist_matrix(pairwise_sq_dist(latents))
        part = make_partition(labels, preds, svs)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            tables = build_anchor_tables(d, part, 3, 2, 2)
        _, _, _, a, m, g = anchor_tables_naive(d, labels, preds, svs, 3, 2, 2)
        for mine, ref in zip((tables.a, tables.m, tables.g), (a, m, g)):
            assert len(mine) == len(ref)
            for row, ref_row in zip(mine, ref):
                np.testing.assert_array_equal(row, ref_row)

    @given(random_configurations())
    @settings(max_examples=60, deadline=None)
    def test_property_full_equivalence(self, config):
        latents, labels, preds, svs, (k1, k2, k3) = config
        d = dist_matrix(pairwise_sq_dist(latents))
        part = make_partition(labels, preds, svs)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            tables = build_anchor_tables(d, part, k1, k2, k3)
        s, q, r, a, m, g = anchor_tables_naive(d, labels, preds, svs, k1, k2, k3)
        np.testing.assert_array_equal(part.s, s)
        np.testing.assert_array_equal(part.q, q)
        np.testing.assert_array_equal(part.r, r)
        for mine, ref in zip((tables.a, tables.m, tables.g), (a, m, g)):
            for row, ref_row in zip(mine, ref):
                np.testing.assert_array_equal(row, ref_row)

        # structural invariants: sorted by distance, no self references
        for src_list, table in ((part.s, tables.a), (part.q, tables.m),
                                (part.r, tables.g)):
            for src, row in zip(src_list, table):
                assert src not in row
                dists = d[src, row]
                assert np.all(np.diff(dists) >= 0)
