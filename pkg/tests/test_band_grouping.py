import numpy as np
import pytest

from dacn.band_grouping import merge_groups, plan_groups
from dacn.errors import ConfigError, DimensionError
from dacn.tensor import Tensor


class TestPlanGroups:
    def test_enumeration_oracle(self):
        plan = plan_groups(10, 4, 2)
        assert plan.groups == [(0, 4), (2, 6), (4, 8), (6, 10)]

    def test_single_group_when_size_equals_total(self):
        plan = plan_groups(7, 7, 3)
        assert plan.groups == [(0, 7)]

    def test_pavia_layout(self):
        # 103 bands, size 32, stride 16 -> 6 groups, last right-aligned
        plan = plan_groups(103, 32, 16)
        assert len(plan.groups) == 6
        assert plan.groups[-1] == (71, 103)
        assert all(end - start == 32 for start, end in plan.groups)

    def test_rejects_bad_sizes(self):
        with pytest.raises(ConfigError):
            plan_groups(10, 11, 2)
        with pytest.raises(ConfigError):
            plan_groups(10, 4, 5)
        with pytest.raises(ConfigError):
            plan_groups(10, 4, 0)

    def test_consecutive_overlap(self):
        plan = plan_groups(20, 6, 4)
        for (s1, e1), (s2, e2) in zip(plan.groups[:-2], plan.groups[1:-1]):
            assert e1 - s2 == plan.group_size - plan.stride

    def test_exhaustive_coverage_sweep(self):
        # every band index covered, every group exactly G wide, for all
        # 1 <= S <= G <= total <= 128
        for total in range(1, 129):
            for size in range(1, total + 1):
                for stride in range(1, size + 1):
                    plan = plan_groups(total, size, stride)
                    covered = np.zeros(total, dtype=int)
                    for start, end in plan.groups:
                        assert end - start == size
                        assert 0 <= start and end <= total
                        covered[start:end] += 1
                    assert covered.min() >= 1, (total, size, stride)


class TestMergeGroups:
    def test_disjoint_concatenation(self, rng):
        plan = plan_groups(6, 3, 3)
        parts = [rng.normal(size=(2, 2, 3)) for _ in plan.groups]
        merged = merge_groups(parts, plan).data
        assert np.array_equal(merged, np.concatenate(parts, axis=-1))

    def test_mean_of_equal_predictions(self):
        plan = plan_groups(6, 4, 2)
        c = 0.731
        parts = [np.full((2, 2, 4), c) for _ in plan.groups]
        assert np.array_equal(merge_groups(parts, plan).data, np.full((2, 2, 6), c))

    def test_averaging_oracle(self):
        plan = plan_groups(3, 2, 1)  # groups [0,2) and [1,3); band 1 shared
        a = np.zeros((1, 1, 2))
        b = np.zeros((1, 1, 2))
        a[..., 1] = 1.0  # band 1 predicted as 1.0 by the first group
        b[..., 0] = 3.0  # and as 3.0 by the second
        merged = merge_groups([a, b], plan).data
        assert merged[0, 0, 1] == 2.0

    def test_round_trip_identity_exact(self, rng):
        # slices of one cube merge back to the cube bit for bit, including
        # bands covered by three groups (plain sum/divide would round)
        x = rng.uniform(0.0, 1.0, size=(3, 3, 11))
        plan = plan_groups(11, 4, 2)
        assert any(
            sum(s <= band < e for s, e in plan.groups) == 3 for band in range(11)
        )
        preds = [x[:, :, s:e] for s, e in plan.groups]
        assert np.array_equal(merge_groups(preds, plan).data, x)

    def test_accepts_tensors(self, rng):
        plan = plan_groups(4, 2, 2)
        parts = [Tensor(rng.normal(size=(2, 2, 2))) for _ in plan.groups]
        merged = merge_groups(parts, plan)
        assert merged.shape == (2, 2, 4)

    def test_count_mismatch(self, rng):
        plan = plan_groups(6, 3, 3)
        with pytest.raises(DimensionError):
            merge_groups([rng.normal(size=(2, 2, 3))], plan)

    def test_shape_mismatch(self, rng):
        plan = plan_groups(6, 3, 3)
        with pytest.raises(DimensionError):
            merge_groups([rng.normal(size=(2, 2, 3)), rng.normal(size=(2, 2, 4))], plan)
