import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from redmix import haar


def test_validate_index_accepts_family_members():
    haar.validate_index(0, 0)
    haar.validate_index(1, 1)
    haar.validate_index(4, 15)


@pytest.mark.parametrize("level,position", [(-1, 0), (0, 1), (0, -1), (2, 4), (3, -1)])
def test_validate_index_rejects_outsiders(level, position):
    with pytest.raises(ValueError):
        haar.validate_index(level, position)


def test_n_functions_counts_members():
    assert haar.n_functions(0) == 1
    assert haar.n_functions(1) == 3
    assert haar.n_functions(2) == 7
    assert haar.n_functions(6) == 127


def test_flat_position_is_level_major():
    assert haar.flat_position(0, 0) == 0
    assert haar.flat_position(1, 0) == 1
    assert haar.flat_position(1, 1) == 2
    assert haar.flat_position(2, 0) == 3
    assert haar.flat_position(3, 5) == 12


def test_indices_enumerate_in_flat_order():
    idx = list(haar.indices(3))
    assert len(idx) == haar.n_functions(3)
    for flat, (level, position) in enumerate(idx):
        assert haar.flat_position(level, position) == flat


def test_level_array_matches_enumeration():
    levels = haar.level_array(4)
    assert levels.tolist() == [ix.level for ix in haar.indices(4)]
    assert haar.level_array(2).tolist() == [0, 1, 1, 2, 2, 2, 2]


def test_eval_level_zero_is_indicator():
    assert haar.haar_eval(0, 0, 0.0) == 1.0
    assert haar.haar_eval(0, 0, 0.999) == 1.0
    assert haar.haar_eval(0, 0, 1.0) == 0.0
    assert haar.haar_eval(0, 0, -0.1) == 0.0


def test_eval_dipole_values():
    # h(1, 0): +sqrt(2) on [0, 1/4), -sqrt(2) on [1/4, 1/2), zero after
    r2 = np.sqrt(2.0)
    assert haar.haar_eval(1, 0, 0.125) == pytest.approx(r2)
    assert haar.haar_eval(1, 0, 0.25) == pytest.approx(-r2)
    assert haar.haar_eval(1, 0, 0.375) == pytest.approx(-r2)
    assert haar.haar_eval(1, 0, 0.5) == 0.0
    assert haar.haar_eval(1, 0, 0.75) == 0.0
    # h(2, 3): supported on [3/4, 1), amplitude 2
    assert haar.haar_eval(2, 3, 0.5) == 0.0
    assert haar.haar_eval(2, 3, 0.8125) == pytest.approx(2.0)
    assert haar.haar_eval(2, 3, 0.875) == pytest.approx(-2.0)


def test_eval_array_matches_scalar():
    ts = np.linspace(0.0, 1.0, 37)
    for level, position in [(0, 0), (1, 1), (3, 4)]:
        arr = haar.haar_eval(level, position, ts)
        scalars = [haar.haar_eval(level, position, float(t)) for t in ts]
        assert np.array_equal(arr, np.array(scalars))


def test_cell_values_agree_with_pointwise_eval():
    max_level = 4
    n_cells = 2 ** (max_level + 1)
    mids = (np.arange(n_cells) + 0.5) / n_cells
    table = haar.cell_values(max_level)
    for flat, (level, position) in enumerate(haar.indices(max_level)):
        assert np.array_equal(table[flat], haar.haar_eval(level, position, mids))


@pytest.mark.parametrize("max_level", [0, 1, 3, 6])
def test_gram_matrix_is_identity(max_level):
    gram = haar.gram_matrix(max_level)
    assert np.max(np.abs(gram - np.eye(len(gram)))) <= 1e-12


def test_values_on_grid_requires_resolving_steps():
    with pytest.raises(ValueError):
        haar.values_on_grid(2, 12)   # 12 is not a multiple of 8


def test_values_on_grid_repeats_cells():
    grid = haar.values_on_grid(1, 16)
    assert grid.shape == (16, 3)
    ts = np.arange(16) / 16.0
    for flat, (level, position) in enumerate(haar.indices(1)):
        assert np.array_equal(grid[:, flat], haar.haar_eval(level, position, ts))


@st.composite
def family_index(draw, max_level=5):
    level = draw(st.integers(min_value=0, max_value=max_level))
    position = draw(st.integers(min_value=0, max_value=max(0, 2 ** level - 1)))
    return level, position


@given(family_index(), st.floats(min_value=-0.5, max_value=1.5))
def test_eval_bounded_and_supported(index, t):
    level, position = index
    value = haar.haar_eval(level, position, t)
    assert abs(value) <= 2.0 ** (level / 2.0) + 1e-15
    if value != 0.0 and level >= 1:
        left = position / 2.0 ** level
        assert left <= t < left + 2.0 ** -level


@given(family_index())
def test_dipoles_integrate_to_zero(index):
    level, position = index
    flat = haar.flat_position(level, position)
    cells = haar.cell_values(level)[flat]
    total = cells.sum() / len(cells)
    if level == 0:
        assert total == pytest.approx(1.0)
    else:
        assert total == pytest.approx(0.0, abs=1e-15)
