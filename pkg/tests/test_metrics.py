import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from sklearn.metrics import adjusted_rand_score

from mmdiar import errors
from mmdiar.corpus import Diarization, Turn
from mmdiar.metrics import (
    DerBreakdown,
    MetricsConfig,
    adjusted_rand_index,
    compute_cpwer,
    compute_der,
    compute_jer,
    edit_distance,
    optimal_speaker_mapping,
    overlap_matrix,
)

import oracles

NO_COLLAR = MetricsConfig(collar=0.0)


def D(*entries):
    return Diarization("r", tuple(Turn(*e) for e in entries))


# ---------------------------------------------------------------- mapping


def test_mapping_identity_up_to_renaming():
    ref = D(("A", 0, 5), ("B", 5, 9))
    hyp = D(("x", 0, 5), ("y", 5, 9))
    assert optimal_speaker_mapping(ref, hyp) == {"x": "A", "y": "B"}


def test_mapping_disjoint_is_empty():
    assert optimal_speaker_mapping(D(("A", 0, 5)), D(("x", 6, 9))) == {}


def test_mapping_matches_exhaustive_search():
    rng = np.random.default_rng(0)
    for _ in range(50):
        m = rng.uniform(0, 10, (4, 4)) * (rng.random((4, 4)) < 0.7)
        ref = Diarization("r", tuple(Turn(f"r{i}", 100 * (4 * i + j), 100 * (4 * i + j) + m[i, j])
                                     for i in range(4) for j in range(4) if m[i, j] > 0))
        hyp = Diarization("r", tuple(Turn(f"h{j}", 100 * (4 * i + j), 100 * (4 * i + j) + m[i, j])
                                     for i in range(4) for j in range(4) if m[i, j] > 0))
        rs, hs, om = overlap_matrix(ref, hyp)
        mapping = optimal_speaker_mapping(ref, hyp)
        got = sum(om[rs.index(r), hs.index(h)] for h, r in mapping.items())
        want = sum(om[i, j] for i, j in oracles.best_assignment(om))
        assert got == pytest.approx(want)


# ---------------------------------------------------------------- DER


def test_der_identity():
    ref = D(("A", 0, 10), ("B", 10, 20))
    assert compute_der(ref, ref).der == 0.0


def test_der_single_hyp_speaker():
    ref = D(("A", 0, 10), ("B", 10, 20))
    res = compute_der(ref, D(("X", 0, 20)), NO_COLLAR)
    assert res == DerBreakdown(missed=0.0, false_alarm=0.0, confusion=10.0, scored=20.0)
    assert res.der == 0.5
    assert res.der == pytest.approx(oracles.der_frame_oracle([("A", 0, 1000), ("B", 1000, 2000)],
                                                             [("X", 0, 2000)], 0))


def test_der_empty_hyp():
    res = compute_der(D(("A", 0, 10)), Diarization("r"))
    assert res.der == 1.0 and res.missed == res.scored


def test_der_collar_removes_boundary_region():
    ref = D(("A", 0, 10), ("B", 10, 20))
    hyp = D(("x", 0, 10.2), ("y", 10.2, 20))
    assert compute_der(ref, hyp, NO_COLLAR).der == pytest.approx(0.2 / 20)
    res = compute_der(ref, hyp, MetricsConfig(collar=0.25))
    assert res.der == 0.0 and res.scored == pytest.approx(20 - 0.25 * 4)


def test_der_overlapping_reference():
    # 2 s where A and B both speak; one hyp speaker covers it -> 2 s missed
    ref = D(("A", 0, 6), ("B", 4, 10))
    hyp = D(("x", 0, 6), ("y", 6, 10))
    res = compute_der(ref, hyp, NO_COLLAR)
    assert (res.missed, res.false_alarm, res.confusion, res.scored) == (2.0, 0.0, 0.0, 12.0)


def test_der_false_alarm():
    res = compute_der(D(("A", 0, 10)), D(("x", 0, 12)), NO_COLLAR)
    assert res.false_alarm == pytest.approx(2.0) and res.der == pytest.approx(0.2)


def test_der_errors():
    with pytest.raises(errors.EmptyReference):
        compute_der(Diarization("r"), D(("x", 0, 1)))
    with pytest.raises(errors.EmptyReference):
        compute_der(D(("A", 0, 0.4)), D(("x", 0, 1)), MetricsConfig(collar=0.25))


@st.composite
def grid_timeline(draw, prefix):
    out = []
    for s in range(draw(st.integers(1, 4))):
        t = 0
        for _ in range(draw(st.integers(1, 4))):
            t += draw(st.integers(0, 300))
            length = draw(st.integers(1, 400))
            out.append((f"{prefix}{s}", t, t + length))
            t += length
    return out


def as_d(entries):
    return Diarization("r", tuple(Turn(s, a / 100, b / 100) for s, a, b in entries))


@given(grid_timeline("r"), grid_timeline("h"), st.sampled_from([0, 10, 25]))
def test_der_matches_frame_oracle(ref, hyp, collar):
    try:
        got = compute_der(as_d(ref), as_d(hyp), MetricsConfig(collar=collar / 100))
    except errors.EmptyReference:
        return
    assert got.der == pytest.approx(oracles.der_frame_oracle(ref, hyp, collar), abs=1e-9)
    assert min(got.missed, got.false_alarm, got.confusion) >= -1e-12
    assert got.der == pytest.approx((got.missed + got.false_alarm + got.confusion) / got.scored)


@given(grid_timeline("r"), grid_timeline("h"))
def test_der_invariant_under_hyp_renaming(ref, hyp):
    renamed = [("Z" + s, a, b) for s, a, b in hyp]
    assert compute_der(as_d(ref), as_d(renamed), NO_COLLAR).der \
        == pytest.approx(compute_der(as_d(ref), as_d(hyp), NO_COLLAR).der)
    assert compute_jer(as_d(ref), as_d(renamed)) == pytest.approx(compute_jer(as_d(ref), as_d(hyp)))


# ---------------------------------------------------------------- JER


def test_jer_examples():
    ref = D(("A", 0, 10), ("B", 10, 20))
    assert compute_jer(ref, ref) == 0.0
    assert compute_jer(ref, D(("x", 30, 40))) == 1.0
    assert compute_jer(D(("A", 0, 10)), D(("X", 0, 5))) == pytest.approx(0.5)


def test_jer_unmapped_reference_speaker_counts_one():
    ref = D(("A", 0, 10), ("B", 10, 20))
    assert compute_jer(ref, D(("x", 0, 10))) == pytest.approx(0.5)


# ---------------------------------------------------------------- cpWER


def test_cpwer_identity_and_swap():
    ref = {"A": "a b c".split(), "B": "d e".split()}
    assert compute_cpwer(ref, ref)[0] == 0.0
    assert compute_cpwer(ref, {"B": ref["A"], "A": ref["B"]})[0] == 0.0


def test_cpwer_example():
    ref = {"A": "a b c".split(), "B": "d e".split()}
    hyp = {"X": "a b c".split(), "Y": "d f".split()}
    value, pairs = compute_cpwer(ref, hyp)
    assert value == pytest.approx(1 / 5)
    assert pairs == {("A", "X"): 0, ("B", "Y"): 1}
    assert value == oracles.cpwer_exhaustive(ref, hyp)


def test_cpwer_padding():
    ref = {"A": ["a", "b"]}
    value, pairs = compute_cpwer(ref, {"X": ["a", "b"], "Y": ["c", "d", "e"]})
    assert value == pytest.approx(3 / 2)
    assert pairs[(None, "Y")] == 3
    value, pairs = compute_cpwer({"A": ["a"], "B": ["b", "c"]}, {})
    assert value == 1.0 and pairs == {("A", None): 1, ("B", None): 2}


def test_cpwer_empty_reference():
    with pytest.raises(errors.EmptyReference):
        compute_cpwer({}, {"X": ["a"]})


def test_edit_distance():
    assert edit_distance("kitten".split("t"), "kitten".split("t")) == 0
    assert edit_distance(list("kitten"), list("sitting")) == 3
    assert edit_distance([], list("abc")) == 3


words = st.lists(st.sampled_from(["a", "b", "c", "d"]), max_size=6)


@given(st.lists(st.sampled_from(list("abcd")), min_size=1, max_size=8), words)
def test_cpwer_single_speaker_is_wer(r, h):
    assert compute_cpwer({"A": r}, {"X": h})[0] == pytest.approx(oracles.levenshtein(r, h) / len(r))


@given(st.dictionaries(st.sampled_from("ABCD"), st.lists(st.sampled_from("abc"), min_size=1, max_size=5),
                       min_size=1),
       st.dictionaries(st.sampled_from("WXYZ"), words))
def test_cpwer_matches_exhaustive(ref, hyp):
    assert compute_cpwer(ref, hyp)[0] == oracles.cpwer_exhaustive(ref, hyp)


# ---------------------------------------------------------------- ARI


@given(st.lists(st.integers(0, 3), min_size=2, max_size=30), st.integers(0, 1000))
def test_ari_matches_sklearn(a, seed):
    b = np.random.default_rng(seed).permutation(a)
    assert adjusted_rand_index(a, b) == pytest.approx(adjusted_rand_score(a, b), abs=1e-12)
    assert adjusted_rand_index(a, b) == pytest.approx(oracles.ari_oracle(a, b), abs=1e-12)


def test_ari_perfect_up_to_relabel():
    assert adjusted_rand_index([0, 0, 1, 1, 2], [5, 5, 3, 3, 9]) == 1.0


def test_exhaustive_oracle_sanity():
    m = np.array([[1.0, 5.0], [4.0, 1.0]])
    assert oracles.best_assignment(m) == [(0, 1), (1, 0)]
    assert max(itertools.permutations(range(2)), key=lambda p: m[0, p[0]] + m[1, p[1]]) == (1, 0)
