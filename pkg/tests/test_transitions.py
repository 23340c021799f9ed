import io
import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from muse_rec.corpus import ConfigError, Session
from muse_rec import transitions as tr


def sessions(*track_lists):
    return [Session(list(t), False, str(i)) for i, t in enumerate(track_lists)]


class TestBuildCounts:
    def test_enumerated_pairs(self):
        counts = tr.build_counts(sessions([0, 1, 2], [0, 1]), dimension=3)
        assert dict(counts.entries) == {(0, 1): 2, (1, 2): 1}
        assert counts.total == 3

    def test_self_transition_kept(self):
        counts = tr.build_counts(sessions([4, 4]), dimension=5)
        assert dict(counts.entries) == {(4, 4): 1}

    def test_empty(self):
        counts = tr.build_counts([], dimension=3)
        assert not counts.entries

    def test_permutation_invariance_over_session_set(self):
        a = sessions([0, 1], [1, 2], [2, 0, 1])
        b = list(reversed(a))
        assert tr.build_counts(a, 3).entries == tr.build_counts(b, 3).entries

    def test_tsv_round_trip(self):
        counts = tr.build_counts(sessions([0, 1, 2], [0, 1]), dimension=3)
        buf = io.StringIO()
        counts.write(buf)
        buf.seek(0)
        assert tr.TransitionCounts.read(buf, 3).entries == counts.entries


class TestLogTransform:
    def test_count_one_maps_to_ln2(self):
        m = tr.log_transform(tr.build_counts(sessions([0, 1]), 2))
        assert m[0, 1] == pytest.approx(math.log(2.0), abs=1e-12)

    def test_absent_entries_stay_absent(self):
        m = tr.log_transform(tr.build_counts(sessions([0, 1]), 3))
        assert m.nnz == 1

    def test_e_minus_one_maps_to_one(self):
        # analytic identity of the log1p transform
        assert np.log1p(math.e - 1.0) == pytest.approx(1.0, abs=1e-12)

    def test_log_nonzero_drops_frequency_one(self):
        counts = tr.build_counts(sessions([0, 1], [0, 1], [1, 2]), 3)
        m = tr.log_transform(counts, log_mode="log_nonzero")
        # (0,1) has count 2 -> ln 2; (1,2) has count 1 -> ln 1 = 0, dropped
        assert m.nnz == 1
        assert m[0, 1] == pytest.approx(math.log(2.0))

    def test_unknown_mode(self):
        with pytest.raises(ConfigError):
            tr.log_transform(tr.build_counts([], 2), log_mode="sqrt")


class TestNormalize:
    def test_proportionality(self):
        m = sp.csr_matrix(np.array([[0.0, 1.0, 3.0], [0, 0, 0], [0, 0, 0]]))
        norm = tr.normalize(m)
        assert norm.row_norm[0, 1] == pytest.approx(0.25)
        assert norm.row_norm[0, 2] == pytest.approx(0.75)

    def test_single_target_probability_one(self):
        m = sp.csr_matrix(np.array([[0.0, 2.5], [0, 0]]))
        norm = tr.normalize(m)
        assert norm.row_norm[0, 1] == pytest.approx(1.0)
        assert norm.col_norm[0, 1] == pytest.approx(1.0)

    def test_empty_rows_stay_empty(self):
        m = sp.csr_matrix((3, 3))
        norm = tr.normalize(m)
        assert norm.row_norm.nnz == 0
        assert norm.col_norm.nnz == 0

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=20, deadline=None)
    def test_row_and_column_stochasticity(self, seed):
        rng = np.random.default_rng(seed)
        n = 30
        m = sp.random(n, n, density=0.1, random_state=np.random.RandomState(seed))
        m.data = rng.random(m.nnz) + 0.01
        norm = tr.normalize(m.tocsr())
        row_sums = np.asarray(norm.row_norm.sum(axis=1)).ravel()
        col_sums = np.asarray(norm.col_norm.sum(axis=0)).ravel()
        nonempty_rows = np.asarray((m.tocsr()).getnnz(axis=1)) > 0
        nonempty_cols = np.asarray((m.tocsc()).getnnz(axis=0)) > 0
        assert np.allclose(row_sums[nonempty_rows], 1.0, atol=1e-9)
        assert np.allclose(col_sums[nonempty_cols], 1.0, atol=1e-9)

    def test_monotonicity_within_row(self):
        # higher raw count => higher normalized probability (log1p is monotone)
        counts = tr.build_counts(sessions([0, 1], [0, 1], [0, 1], [0, 2]), 3)
        norm = tr.normalize(tr.log_transform(counts))
        assert norm.row_norm[0, 1] > norm.row_norm[0, 2]
