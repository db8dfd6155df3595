import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from symadapt.mesh import TimeMesh, dt_max, interpolate_trajectory, refine, uniform_mesh
from symadapt.solver import Trajectory


class TestUniform:
    def test_single_interval(self):
        assert uniform_mesh(1.0, 1).nodes.tolist() == [0.0, 1.0]

    def test_constant_steps(self):
        m = uniform_mesh(25.0, 100)
        np.testing.assert_allclose(m.dt, 0.25, rtol=2e-14)
        assert m.level == 0 and m.parent_of is None

    def test_thirds(self):
        np.testing.assert_allclose(uniform_mesh(4.0, 3).nodes, [0, 4 / 3, 8 / 3, 4], rtol=1e-15)

    @pytest.mark.parametrize("T,N", [(0.0, 3), (-1.0, 3), (1.0, 0), (1.0, 2.5)])
    def test_rejects(self, T, N):
        with pytest.raises(ValueError):
            uniform_mesh(T, N)


class TestMeshValidation:
    def test_nonincreasing(self):
        with pytest.raises(ValueError):
            TimeMesh([0.0, 0.5, 0.5, 1.0])

    def test_nonzero_start(self):
        with pytest.raises(ValueError):
            TimeMesh([0.1, 1.0])

    def test_parent_length(self):
        with pytest.raises(ValueError):
            TimeMesh([0.0, 0.5, 1.0], 1, [0])

    def test_immutable(self):
        m = uniform_mesh(1.0, 2)
        with pytest.raises(ValueError):
            m.nodes[1] = 0.3


class TestRefine:
    def test_split_single(self):
        m = refine(TimeMesh([0.0, 1.0]), [True], 2)
        assert m.nodes.tolist() == [0.0, 0.5, 1.0]
        assert m.parent_of.tolist() == [0, 0] and m.level == 1

    def test_split_second(self):
        m = refine(TimeMesh([0.0, 0.5, 1.0]), [False, True], 2)
        assert m.nodes.tolist() == [0.0, 0.5, 0.75, 1.0]
        assert m.parent_of.tolist() == [0, 1, 1]

    def test_no_flags(self):
        base = uniform_mesh(2.0, 5)
        m = refine(base, np.zeros(5, bool), 3)
        assert np.array_equal(m.nodes, base.nodes)
        assert m.level == 1 and m.parent_of.tolist() == list(range(5))

    def test_three_way(self):
        m = refine(TimeMesh([0.0, 3.0]), [True], 3)
        np.testing.assert_allclose(m.nodes, [0, 1, 2, 3], rtol=1e-15)

    def test_flag_shape_mismatch(self):
        with pytest.raises(ValueError):
            refine(uniform_mesh(1.0, 3), [True, False], 2)
        with pytest.raises(ValueError):
            refine(uniform_mesh(1.0, 3), [], 2)

    def test_rejects_small_M(self):
        with pytest.raises(ValueError):
            refine(uniform_mesh(1.0, 1), [True], 1)

    def test_repeated_full_refinement(self):
        m = uniform_mesh(25.0, 10)
        for k in range(1, 6):
            m = refine(m, np.ones(m.N, bool), 2)
            assert m.N == 10 * 2**k and m.level == k
        assert m.nodes[-1] == 25.0

    @settings(max_examples=60, deadline=None)
    @given(st.integers(1, 30), st.integers(2, 4), st.data())
    def test_refinement_properties(self, N, M, data):
        m = uniform_mesh(data.draw(st.floats(0.1, 100.0)), N)
        for _ in range(3):
            flags = data.draw(hnp.arrays(bool, m.N))
            child = refine(m, flags, M)
            # old nodes survive bit-identically
            assert np.all(np.isin(m.nodes, child.nodes))
            assert child.N == m.N + (M - 1) * int(flags.sum())
            assert child.nodes[-1] == m.nodes[-1]
            # every child interval sits inside its parent
            p = child.parent_of
            assert np.all(child.nodes[:-1] >= m.nodes[p])
            assert np.all(child.nodes[1:] <= m.nodes[p + 1])
            assert np.all(np.bincount(p, minlength=m.N) == np.where(flags, M, 1))
            m = child


class TestDtMax:
    def test_values(self):
        assert dt_max(uniform_mesh(1.0, 4)) == 0.25
        assert dt_max(TimeMesh([0.0, 0.5, 0.75, 1.0])) == 0.5
        assert dt_max(TimeMesh([0.0, 1e-6, 1.0])) == 1.0 - 1e-6


class TestInterpolate:
    def _traj(self, mesh, X, lam=None):
        X = np.asarray(X, dtype=float)
        return Trajectory(X, X.copy() if lam is None else lam, mesh)

    def test_identity(self):
        m = refine(uniform_mesh(1.0, 4), [True, False, True, False])
        rng = np.random.default_rng(0)
        tr = self._traj(m, rng.normal(size=(m.N + 1, 2)))
        out = interpolate_trajectory(m, tr, m)
        assert np.array_equal(out.X, tr.X) and np.array_equal(out.lam, tr.lam)

    def test_linear_data_exact(self):
        src = uniform_mesh(3.0, 3)
        dst = refine(refine(src, [True, False, True]), np.ones(5, bool))
        tr = self._traj(src, 2.0 * src.nodes - 1.0)
        out = interpolate_trajectory(src, tr, dst)
        np.testing.assert_allclose(out.X[:, 0], 2.0 * dst.nodes - 1.0, rtol=0, atol=1e-15)

    def test_midpoint(self):
        src = TimeMesh([0.0, 1.0])
        out = interpolate_trajectory(src, self._traj(src, [0.0, 2.0]), TimeMesh([0.0, 0.5, 1.0]))
        assert out.X[:, 0].tolist() == [0.0, 1.0, 2.0]

    def test_endpoints_preserved(self):
        src = uniform_mesh(1.0, 7)
        tr = self._traj(src, np.sin(7 * src.nodes))
        out = interpolate_trajectory(src, tr, uniform_mesh(1.0, 13))
        assert out.X[0, 0] == tr.X[0, 0] and out.X[-1, 0] == tr.X[-1, 0]

    def test_span_mismatch(self):
        src = uniform_mesh(1.0, 2)
        with pytest.raises(ValueError):
            interpolate_trajectory(src, self._traj(src, [0, 1, 2]), uniform_mesh(2.0, 2))
