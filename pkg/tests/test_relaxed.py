import json
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from roughctl.errors import DomainError, InvalidParameterError
from roughctl.relaxed import (
    StepRelaxedControl,
    TestFunction,
    chatter,
    default_dictionary,
    dirac_control,
    embed_ordinary,
    n_simplex_points,
    simplex_points,
    step_approximate,
    uniform_cells,
    vague_distance,
)
from roughctl.signal import GridPath, constant_path


def simplex_rows(rows, k):
    raw = st.lists(st.lists(st.floats(0.0, 1.0), min_size=k, max_size=k), min_size=rows, max_size=rows)
    return raw.map(lambda w: _normalise(np.array(w)))


def _normalise(w):
    w = w + 1e-3
    return w / w.sum(axis=1, keepdims=True)


def step_moment_r(u: GridPath):
    """Exact int_0^T r u(r) dr for a control held on grid steps."""
    t = u.times
    return float(np.sum(u.values[:-1] * (t[1:] ** 2 - t[:-1] ** 2) / 2))


class TestStepRelaxedControl:
    def test_simplex_enforced(self):
        with pytest.raises(InvalidParameterError):
            StepRelaxedControl([0, 1], [0, 1], [[0.6, 0.5]])
        with pytest.raises(InvalidParameterError):
            StepRelaxedControl([0, 1], [0, 1], [[1.2, -0.2]])

    def test_atoms_inside_u(self):
        with pytest.raises(DomainError):
            StepRelaxedControl([0, 1], [0, 2], [[0.5, 0.5]], u_range=(0, 1))

    def test_json_round_trip(self):
        q = StepRelaxedControl(uniform_cells(1, 3), [-1, 0.5], [[1, 0], [0.25, 0.75], [0.5, 0.5]], (-1, 1))
        data = json.loads(q.to_json())
        assert set(data) >= {"cells", "atoms", "weights"}
        r = StepRelaxedControl.from_json(q.to_json())
        assert np.array_equal(r.weights, q.weights) and r.u_range == q.u_range

    def test_step_weights_follow_cells(self):
        q = StepRelaxedControl(uniform_cells(1, 2), [0, 1], [[1, 0], [0, 1]])
        w = q.step_weights(8)
        assert np.array_equal(w[:4], np.tile([1, 0], (4, 1)))
        assert np.array_equal(w[4:], np.tile([0, 1], (4, 1)))


class TestEmbed:
    def test_constant(self):
        q = embed_ordinary(constant_path(0.3, 1.0, 16))
        assert q.atoms.tolist() == [0.3] and q.weights.tolist() == [[1.0]]

    def test_bang_bang(self):
        u = GridPath(1.0, [1, 1, 1, 1, -1, -1, -1, -1, -1])
        q = embed_ordinary(u)
        assert q.cells.tolist() == [0.0, 0.5, 1.0]
        assert q.weights.tolist() == [[0.0, 1.0], [1.0, 0.0]]

    def test_outside_u(self):
        with pytest.raises(DomainError):
            embed_ordinary(constant_path(2.0, 1.0, 4), u_range=(0, 1))


class TestChatter:
    def test_unit_weights_unchanged(self):
        u = GridPath(1.0, [0, 0, 0, 0, 1, 1, 1, 1, 1])
        q = embed_ordinary(u)
        for m in (1, 2, 4):
            v, _ = chatter(q, m, 8)
            assert np.array_equal(v.values[:-1], u.values[:-1])

    def test_half_half_split(self):
        q = StepRelaxedControl([0, 1], [0, 1], [[0.5, 0.5]])
        u, part = chatter(q, 1, 64)
        assert np.all(u.values[:32] == 0) and np.all(u.values[32:] == 1)
        assert part.intervals == ((0.0, 0.5, 0), (0.5, 1.0, 1))
        assert part.to_csv() == "t_start,t_end,atom\r\n0,0.5,0\r\n0.5,1,1\r\n"

    def test_state_free_gap_halves(self):
        q = StepRelaxedControl([0, 1], [0, 1], [[0.5, 0.5]])
        relaxed = 0.5 * 0.5  # int r * (0.5 * 0 + 0.5 * 1) dr
        gaps = []
        for m in (1, 2, 4, 8):
            u, _ = chatter(q, m, 1024)
            gaps.append(abs(step_moment_r(u) - relaxed))
            # the r-free integrand a is matched exactly at every level
            assert np.mean(u.values[:-1]) == 0.5
        assert np.allclose(np.array(gaps[:-1]) / np.array(gaps[1:]), 2.0, rtol=1e-9)

    def test_vague_distance_halves(self):
        q = StepRelaxedControl(uniform_cells(1, 2), [0, 1], [[0.5, 0.5], [0.25, 0.75]])
        d = []
        for m in (1, 2, 4, 8, 16):
            u, _ = chatter(q, m, 2048)
            d.append(vague_distance(q, embed_ordinary(u, q.u_range)))
        ratios = np.array(d[:-1]) / np.array(d[1:])
        assert np.all((ratios > 1.8) & (ratios < 2.2))

    def test_uneven_subcells_snap(self):
        q = StepRelaxedControl([0, 1], [0, 1], [[0.3, 0.7]])
        u, part = chatter(q, 5, 16)
        occ = part.occupation(q.cells)
        assert occ.sum() == pytest.approx(1.0)
        assert abs(occ[0, 0] - 0.3) <= 1 / 16

    def test_bad_level(self):
        with pytest.raises(InvalidParameterError):
            chatter(dirac_control(0.0, 1.0), 0, 8)

    @settings(max_examples=40, deadline=None)
    @given(simplex_rows(3, 3), st.sampled_from([1, 2, 3, 4, 8, 16]), st.sampled_from([48, 96, 192]))
    def test_measure_match(self, w, m, n):
        q = StepRelaxedControl(uniform_cells(1, 3), [-1, 0, 2], w)
        u, part = chatter(q, m, n)
        occ = part.occupation(q.cells)
        cell_len = np.diff(q.cells)[:, None]
        assert np.all(np.abs(occ - w * cell_len) <= 1.0 / n + 1e-12)
        assert np.allclose(occ.sum(axis=1), cell_len[:, 0])
        # intervals tile [0, T] in order
        ends = [(s, e) for s, e, _ in part.intervals]
        assert ends[0][0] == 0 and ends[-1][1] == pytest.approx(1.0)
        assert all(a[1] == b[0] for a, b in zip(ends, ends[1:]))
        assert set(np.unique(u.values)) <= set(q.atoms)


class TestVagueDistance:
    def test_identity_and_symmetry(self):
        a = StepRelaxedControl(uniform_cells(1, 2), [0, 1], [[0.5, 0.5], [1, 0]])
        b = StepRelaxedControl(uniform_cells(1, 2), [0, 1], [[0.1, 0.9], [0.3, 0.7]])
        assert vague_distance(a, a) == 0
        assert vague_distance(a, b) == vague_distance(b, a) > 0

    def test_empty_dictionary(self):
        q = dirac_control(0.0, 1.0)
        with pytest.raises(InvalidParameterError):
            vague_distance(q, q, [])

    def test_custom_dictionary(self):
        q1 = dirac_control(0.0, 1.0, (0, 1))
        q2 = dirac_control(1.0, 1.0, (0, 1))
        tf = TestFunction(1, lambda a: a, "r a")
        assert vague_distance(q1, q2, [tf]) == pytest.approx(0.5)

    def test_dictionary_default(self):
        assert len(default_dictionary()) == 6

    @settings(max_examples=40, deadline=None)
    @given(simplex_rows(2, 3), simplex_rows(2, 3), simplex_rows(2, 3))
    def test_pseudometric(self, w1, w2, w3):
        cells, atoms = uniform_cells(1, 2), [-1.0, 0.0, 1.5]
        q1, q2, q3 = (StepRelaxedControl(cells, atoms, w) for w in (w1, w2, w3))
        d12, d23, d13 = vague_distance(q1, q2), vague_distance(q2, q3), vague_distance(q1, q3)
        assert min(d12, d23, d13) >= 0
        assert d12 == vague_distance(q2, q1)
        assert d13 <= d12 + d23 + 1e-12


class TestStepApproximate:
    def test_constant_kernel(self):
        q = step_approximate(lambda r: ([0.0, 1.0], [0.3, 0.7]), 4, 2, (0, 1))
        assert np.all(q.weights == q.weights[0])

    def test_dirac_kernel_recovers_embedding(self):
        levels = lambda r: 0.0 if r < 0.5 else 1.0
        q = step_approximate(lambda r: ([levels(r)], [1.0]), 4, 3, (0, 1))
        u = GridPath(1.0, [0, 0, 1, 1, 1])
        e = embed_ordinary(u, (0, 1))
        assert vague_distance(q, e) == pytest.approx(0.0, abs=1e-15)

    def test_refinement_consistency(self):
        def kernel(r):
            c = 0.5 + 0.4 * np.sin(2 * np.pi * r)
            return [c - 0.1, c + 0.1], [0.5, 0.5]

        d = []
        for m, k in ((2, 3), (4, 6), (8, 12), (16, 24)):
            d.append(vague_distance(step_approximate(kernel, m, k, (0, 1)), step_approximate(kernel, 2 * m, 2 * k, (0, 1))))
        assert all(a > b for a, b in zip(d, d[1:]))

    def test_mass_handling(self):
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            q = step_approximate(lambda r: ([0.0], [1.0 + 1e-8]), 2, 2, (0, 1))
        assert any(issubclass(w.category, RuntimeWarning) for w in caught)
        assert np.allclose(q.weights.sum(axis=1), 1.0)
        with pytest.raises(InvalidParameterError):
            step_approximate(lambda r: ([0.0], [0.9]), 2, 2, (0, 1))


def test_simplex_points():
    pts = simplex_points(3, 5)
    assert len(pts) == n_simplex_points(3, 5) == 21
    assert np.allclose(pts.sum(axis=1), 1.0)
    assert pts[0].tolist() == [1.0, 0.0, 0.0]
