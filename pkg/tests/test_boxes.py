import math

import numpy as np
import pytest

from bumphunt.boxes import AxisBox, BoxStats, stats_from_mask
from bumphunt.exceptions import ValidationError


def test_validation():
    with pytest.raises(ValidationError):
        AxisBox([1.0], [0.0])
    with pytest.raises(ValidationError):
        AxisBox([0.0, 0.0], [1.0])
    with pytest.raises(ValidationError):
        AxisBox([np.nan], [1.0])


def test_closed_membership_and_infinite_sides():
    box = AxisBox([0.0, -np.inf], [1.0, np.inf])
    assert box.contains([[0, 5], [1, -1e300], [1.0001, 0]]).tolist() == [True, True, False]
    assert box.bounded.tolist() == [True, False]


def test_immutability_and_equality():
    box = AxisBox([0, 0], [1, 2])
    with pytest.raises(ValueError):
        box.lower[0] = 3
    assert box == AxisBox([0.0, 0.0], [1.0, 2.0]) and box != AxisBox([0, 0], [1, 3])
    assert len({box, AxisBox([0, 0], [1, 2])}) == 1


def test_includes_replace_clipped():
    outer = AxisBox([-1, -1], [1, 1])
    inner = outer.replace(0, lower=0)
    assert outer.includes(inner) and not inner.includes(outer)
    frame = AxisBox([-3, -3], [3, 3])
    assert AxisBox.whole(2).clipped(frame) == frame
    assert AxisBox.bounding([inner, AxisBox([2, 2], [3, 3])]) == AxisBox([0, -1], [3, 3])


def test_dict_and_csv_round_trip(tmp_path):
    box = AxisBox([-np.inf, 0.5], [1.25, np.inf])
    d = box.to_dict()
    assert d == {"lower": [None, 0.5], "upper": [1.25, None]}
    assert AxisBox.from_dict(d) == box
    box.write_csv(tmp_path / "b.csv", names=["a", "b"])
    rows = (tmp_path / "b.csv").read_text().splitlines()
    assert rows == ["dimension,lower,upper", "a,,1.25", "b,0.5,"]


def test_stats_from_mask():
    Z = np.array([1.0, 2, 3, 4])
    s = stats_from_mask(Z, np.array([False, False, True, True]))
    assert (s.count, s.support, s.output_mean) == (2, 0.5, 3.5)
    assert s.output_mean == pytest.approx(s.output_sum_fraction / s.support)
    e = stats_from_mask(Z, np.zeros(4, bool))
    assert e.empty and math.isnan(e.output_mean) and e.to_dict()["output_mean"] is None
