import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from almix.design_space import (
    Dataset,
    DesignSpace,
    MixedPoint,
    dataset_from_csv,
    dataset_to_csv,
    enumerate_level_combinations,
    points_to_csv,
    validate_point,
)

spaces = (
    st.tuples(st.integers(0, 4), st.lists(st.integers(2, 4), max_size=3))
    .filter(lambda t: t[0] + len(t[1]) >= 1)
    .map(lambda t: DesignSpace(t[0], tuple(t[1])))
)


def test_space_invariants():
    with pytest.raises(ValueError):
        DesignSpace(-1, (3,))
    with pytest.raises(ValueError):
        DesignSpace(1, (1,))
    with pytest.raises(ValueError):
        DesignSpace(0, ())
    assert DesignSpace(2, ()).n_combinations == 1
    assert DesignSpace(1, (2, 3)).n_combinations == 6


def test_enumerate_single_factor():
    combos = enumerate_level_combinations(DesignSpace(1, (3,)))
    assert combos == [(1,), (2,), (3,)]


def test_enumerate_empty_product():
    assert enumerate_level_combinations(DesignSpace(2, ())) == [()]


def test_enumerate_lexicographic():
    combos = enumerate_level_combinations(DesignSpace(2, (2, 3)))
    assert len(combos) == 6
    assert combos[0] == (1, 1)
    assert combos[-1] == (2, 3)
    assert combos == sorted(combos)


@given(spaces)
def test_enumerate_count_and_distinct(space):
    combos = enumerate_level_combinations(space)
    assert len(combos) == space.n_combinations
    assert len(set(combos)) == len(combos)


def test_validate_point_examples():
    space = DesignSpace(1, (3,))
    assert validate_point(space, MixedPoint((0.5,), (3,))) is None
    msg = validate_point(space, MixedPoint((1.5,), (1,)))
    assert msg is not None and "x[0] out of [0,1]" in msg
    msg = validate_point(space, MixedPoint((0.5,), (4,)))
    assert msg is not None and "z[0] exceeds 3" in msg
    msg = validate_point(space, MixedPoint((0.5, 0.5), (1,)))
    assert msg is not None and "coordinates" in msg


def test_dataset_rejects_duplicates_and_mismatch():
    space = DesignSpace(1, (3,))
    w = MixedPoint((0.5,), (1,))
    with pytest.raises(ValueError, match="duplicate"):
        Dataset(space, (w, w), (1.0, 2.0))
    with pytest.raises(ValueError, match="responses"):
        Dataset(space, (w,), (1.0, 2.0))


def test_dataset_extended_is_new_object():
    space = DesignSpace(1, (3,))
    d0 = Dataset(space, (MixedPoint((0.1,), (1,)),), (1.0,))
    d1 = d0.extended(MixedPoint((0.9,), (2,)), 2.0)
    assert d0.n == 1 and d1.n == 2
    assert MixedPoint((0.9,), (2,)) in d1
    assert MixedPoint((0.9,), (2,)) not in d0
    assert d1.X.shape == (2, 1) and d1.Z.shape == (2, 1)


def test_dataset_csv_roundtrip(tmp_path):
    space = DesignSpace(2, (3, 2))
    pts = (
        MixedPoint((0.123456789012345, 0.5), (1, 2)),
        MixedPoint((0.9, 0.25), (3, 1)),
    )
    data = Dataset(space, pts, (1.5, -2.25))
    path = tmp_path / "d.csv"
    dataset_to_csv(data, path)
    text = path.read_text()
    assert text.startswith("# almix-csv v1 dataset")
    assert "x1,x2,z1,z2,y" in text
    back = dataset_from_csv(path, space)
    assert back == data


def test_design_csv_has_no_response_column(tmp_path):
    space = DesignSpace(1, (2,))
    pts = [MixedPoint((0.5,), (1,))]
    path = tmp_path / "design.csv"
    points_to_csv(space, pts, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "# almix-csv v1 design"
    assert lines[1] == "x1,z1"
