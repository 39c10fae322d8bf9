import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from budgeted_svc.data import (Dataset, apply_standardization, dumps_csv, gen_gaussian_mixture,
                               gen_moons, gen_rings, load_csv, load_iris, save_csv, standardize)
from budgeted_svc.exceptions import InvalidInputError, ParseError


def test_load_csv_with_labels(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("1,2,A\n3,4,B\n")
    d = load_csv(p, label_column=2)
    assert d.points.tolist() == [[1.0, 2.0], [3.0, 4.0]]
    assert d.labels.tolist() == [0, 1]


def test_load_csv_header_and_first_appearance(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("x,y,cls\n1,2,b\n3,4,a\n5,6,b\n")
    d = load_csv(p, has_header=True, label_column=-1)
    assert d.labels.tolist() == [0, 1, 0]


@pytest.mark.parametrize("text,line", [("1,2\n3\n", 2), ("1,2\nx,3\n", 2), ("", 1)])
def test_load_csv_errors_name_line(tmp_path, text, line):
    p = tmp_path / "d.csv"
    p.write_text(text)
    with pytest.raises(ParseError, match=f"line {line}"):
        load_csv(p)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.lists(st.floats(allow_nan=False, allow_infinity=False), min_size=3,
                         max_size=3), min_size=1, max_size=20))
def test_csv_round_trip_is_exact(tmp_path_factory, rows):
    d = Dataset(np.array(rows), np.arange(len(rows)) % 3)
    p = tmp_path_factory.mktemp("csv") / "d.csv"
    save_csv(d, p)
    back = load_csv(p, label_column=3)
    assert np.array_equal(back.points, d.points)
    assert np.array_equal(back.labels, np.array([{0: 0, 1: 1, 2: 2}[v] for v in d.labels]))


def test_standardize():
    rng = np.random.default_rng(0)
    X = np.c_[rng.normal(5, 3, 200), np.full(200, 7.0)]
    s, mean, scale = standardize(Dataset(X))
    np.testing.assert_allclose(s.points.mean(axis=0), 0, atol=1e-9)
    np.testing.assert_allclose(s.points[:, 0].std(), 1, atol=1e-9)
    assert scale[1] == 1.0 and np.all(s.points[:, 1] == 0)
    assert np.array_equal(apply_standardization(Dataset(X), mean, scale).points, s.points)
    again, m2, s2 = standardize(s)
    np.testing.assert_allclose(m2, 0, atol=1e-9)
    np.testing.assert_allclose(s2[0], 1, atol=1e-9)
    with pytest.raises(InvalidInputError):
        standardize(Dataset([[1.0]]))


def test_rings():
    a, b = gen_rings(seed=7), gen_rings(seed=7)
    assert np.array_equal(a.points, b.points)
    assert sorted(set(a.labels.tolist())) == [0, 1, 2]
    exact = gen_rings(50, (1.5, 3.0), 0.0, 10, seed=1)
    r = np.linalg.norm(exact.points, axis=1)
    np.testing.assert_allclose(r[exact.labels == 0], 1.5)
    np.testing.assert_allclose(r[exact.labels == 1], 3.0)
    with pytest.raises(InvalidInputError):
        gen_rings(radii=(1.0, 1.0))


def test_moons():
    a, b = gen_moons(100, seed=3), gen_moons(100, seed=3)
    assert np.array_equal(a.points, b.points)
    assert sorted(set(a.labels.tolist())) == [0, 1]
    exact = gen_moons(100, 0.0, seed=3)
    upper = exact.points[exact.labels == 0]
    lower = exact.points[exact.labels == 1]
    np.testing.assert_allclose(np.linalg.norm(upper, axis=1), 1.0)
    assert upper[:, 1].min() >= 0
    np.testing.assert_allclose(np.linalg.norm(lower - [1.0, 0.5], axis=1), 1.0)
    assert lower[:, 1].max() <= 0.5


def test_gaussian_mixture():
    means = [(0.0, 0.0), (4.0, 1.0), (-3.0, 2.0)]
    d = gen_gaussian_mixture([400, 400, 400], means, [0.5, 1.0, 0.2], seed=4)
    assert sorted(set(d.labels.tolist())) == [0, 1, 2]
    for j, (m, s) in enumerate(zip(means, [0.5, 1.0, 0.2])):
        emp = d.points[d.labels == j].mean(axis=0)
        assert np.all(np.abs(emp - m) <= 3 * s / np.sqrt(400))
    flat = gen_gaussian_mixture([5, 5], [(1, 1), (2, 2)], [0.0, 0.0])
    assert np.array_equal(flat.points[:5], np.ones((5, 2)))
    with pytest.raises(InvalidInputError):
        gen_gaussian_mixture([5], [(0, 0), (1, 1)], [1.0])


def test_iris():
    d = load_iris()
    assert d.points.shape == (150, 4)
    assert np.bincount(d.labels).tolist() == [50, 50, 50]


def test_dataset_validation():
    with pytest.raises(InvalidInputError):
        Dataset(np.zeros((0, 2)))
    with pytest.raises(InvalidInputError):
        Dataset([[np.nan, 1.0]])
    with pytest.raises(InvalidInputError):
        Dataset([[1.0], [2.0]], labels=[0])
    d = Dataset([[1.0, 2.0]])
    with pytest.raises(ValueError):
        d.points[0, 0] = 5.0


def test_dumps_header():
    text = dumps_csv(Dataset([[1.0, 2.0]], [0]), header=True)
    assert text.splitlines()[0] == "x0,x1,label"
