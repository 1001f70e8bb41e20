import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mmdiar import errors
from mmdiar.corpus import Segment, TextRecord, VisualRecord
from mmdiar.fusion import (
    FusionConfig,
    adjust_affinity,
    attach_faces,
    dialogue_spans,
    e2cp_propagate,
    merge_constraints,
    textual_constraints,
    visual_constraints,
)

import oracles


def seg(s, e):
    return Segment("r", s, e)


def random_instance(seed, n=8, density=0.3):
    rng = np.random.default_rng(seed)
    a = rng.uniform(size=(n, n))
    w = 0.5 * (a + a.T)
    np.fill_diagonal(w, 1.0)
    z = np.triu(rng.uniform(-1, 1, (n, n)) * (rng.random((n, n)) < density), 1)
    return w, z + z.T


# ---------------------------------------------------------------- visual


def test_visual_same_face_must_link():
    z = visual_constraints([VisualRecord(0, 4, "f0")], [seg(0, 1), seg(2, 3)])
    np.testing.assert_array_equal(z, [[0, 1], [1, 0]])


def test_visual_different_faces_cannot_link():
    z = visual_constraints([VisualRecord(0, 1, "f0"), VisualRecord(2, 3, "f1")], [seg(0, 1), seg(2, 3)])
    np.testing.assert_array_equal(z, [[0, -1], [-1, 0]])


def test_visual_low_coverage_unattached():
    vis = [VisualRecord(0, 1, "f0"), VisualRecord(2, 2.3, "f0")]
    z = visual_constraints(vis, [seg(0, 1), seg(2, 3)])
    assert not z.any()


def test_visual_confidence_is_min():
    vis = [VisualRecord(0, 1, "f0", 0.6), VisualRecord(2, 3, "f0", 0.9)]
    assert visual_constraints(vis, [seg(0, 1), seg(2, 3)])[0, 1] == pytest.approx(0.6)


def test_attach_prefers_best_coverage():
    vis = [VisualRecord(0, 0.6, "f1", 0.5), VisualRecord(0.2, 1.0, "f0", 0.8)]
    ((face, conf),) = attach_faces(vis, [seg(0, 1)])
    assert face == "f0" and conf == pytest.approx(0.8)


def test_attach_weighted_confidence():
    vis = [VisualRecord(0, 0.5, "f0", 1.0), VisualRecord(0.5, 1.0, "f0", 0.5)]
    ((face, conf),) = attach_faces(vis, [seg(0, 1)])
    assert face == "f0" and conf == pytest.approx(0.75)


# ---------------------------------------------------------------- textual


def dialogue(*records):
    return [TextRecord(0, "dialogue_on"), *records, TextRecord(100, "dialogue_off")]


def test_textual_change_gives_cannot_link():
    z = textual_constraints(dialogue(TextRecord(1.2, "turn_change", 0.9)), [seg(0, 1), seg(1.5, 2.5)])
    assert z[0, 1] == pytest.approx(-0.9)


def test_textual_no_change_weak_must_link():
    z = textual_constraints(dialogue(), [seg(0, 1), seg(1.5, 2.5)])
    assert z[0, 1] == 0.5


def test_textual_far_apart_unconstrained():
    z = textual_constraints(dialogue(), [seg(0, 1), seg(6, 7)])
    assert not z.any()


def test_textual_touching_segments_use_slack():
    segs = [seg(0, 1), seg(1, 2)]
    assert textual_constraints(dialogue(TextRecord(1.2, "turn_change")), segs)[0, 1] == -1.0
    assert textual_constraints(dialogue(TextRecord(1.3, "turn_change")), segs)[0, 1] == 0.5


def test_textual_overlapping_windows():
    # overlap [0.75, 1.5]: the change point inside it counts
    segs = [seg(0, 1.5), seg(0.75, 2.25)]
    assert textual_constraints(dialogue(TextRecord(1.0, "turn_change")), segs)[0, 1] == -1.0


def test_textual_gating():
    recs = [TextRecord(10, "dialogue_on"), TextRecord(20, "dialogue_off")]
    z = textual_constraints(recs, [seg(0, 1), seg(1.5, 2.5), seg(12, 13), seg(13.5, 14)])
    assert z[0, 1] == 0 and z[2, 3] == 0.5
    ungated = textual_constraints(recs, [seg(0, 1), seg(1.5, 2.5)], FusionConfig(dialogue_gating=False))
    assert ungated[0, 1] == 0.5


def test_dialogue_spans_open_ended():
    assert dialogue_spans([TextRecord(5, "dialogue_on")]) == [(5, np.inf)]
    assert dialogue_spans([TextRecord(1, "dialogue_on"), TextRecord(2, "dialogue_off"),
                           TextRecord(3, "dialogue_off")]) == [(1, 2)]


# ---------------------------------------------------------------- merge


@pytest.mark.parametrize("a,b,want", [(0.8, -0.6, 0.0), (0.8, 0.0, 0.8), (0.5, 0.7, 0.7),
                                      (-0.5, -0.7, -0.7), (0.0, -0.3, -0.3)])
def test_merge_rules(a, b, want):
    zv = np.array([[0.0, a], [a, 0.0]])
    zt = np.array([[0.0, b], [b, 0.0]])
    assert merge_constraints(zv, zt)[0, 1] == pytest.approx(want)
    assert merge_constraints(zt, zv)[0, 1] == pytest.approx(want)


def test_merge_shape_mismatch():
    with pytest.raises(errors.DimensionMismatch):
        merge_constraints(np.zeros((2, 2)), np.zeros((3, 3)))


# ---------------------------------------------------------------- E2CP


def test_zero_constraints_stay_zero():
    w, _ = random_instance(0)
    assert not e2cp_propagate(w, np.zeros_like(w)).any()


def test_alpha_zero_returns_z():
    w, z = random_instance(1)
    np.testing.assert_allclose(e2cp_propagate(w, z, FusionConfig(alpha=0.0)), z, atol=1e-15)


def test_single_must_link_matches_iteration():
    w, _ = random_instance(2, n=3)
    z = np.zeros((3, 3))
    z[0, 1] = z[1, 0] = 1.0
    f = e2cp_propagate(w, z, FusionConfig(alpha=0.25))
    np.testing.assert_allclose(f, oracles.e2cp_iterative(w, z, 0.25), atol=1e-10)
    assert f[0, 1] > 0 and f[0, 2] != 0


def test_frozen_propagation_value():
    w = np.array([[1.0, 0.5, 0.2], [0.5, 1.0, 0.4], [0.2, 0.4, 1.0]])
    z = np.zeros((3, 3))
    z[0, 1] = z[1, 0] = 1.0
    f = e2cp_propagate(w, z, FusionConfig(alpha=0.25))
    # value cross-checked against the iterative propagation oracle
    np.testing.assert_allclose(f, oracles.e2cp_iterative(w, z, 0.25), atol=1e-10)
    assert f[0, 1] == pytest.approx(0.779948, abs=1e-6)
    assert f[0, 2] == pytest.approx(0.057696, abs=1e-6)


def test_isolated_node_raises():
    w = np.eye(3)
    w[0, 0] = 0.0
    with pytest.raises(errors.IsolatedNode):
        e2cp_propagate(w, np.zeros((3, 3)))


def test_alpha_range():
    with pytest.raises(ValueError):
        FusionConfig(alpha=1.0)


@given(st.integers(0, 10_000), st.sampled_from([0.1, 0.25, 0.5, 0.9]))
def test_propagation_symmetric_bounded(seed, alpha):
    w, z = random_instance(seed)
    f = e2cp_propagate(w, z, FusionConfig(alpha=alpha))
    np.testing.assert_allclose(f, f.T, atol=1e-8)
    assert np.abs(f).max() <= 1.0 and not np.diag(f).any()


@given(st.integers(0, 10_000), st.sampled_from([0.1, 0.25, 0.5]))
def test_propagation_linear_in_z(seed, alpha):
    w, z1 = random_instance(seed)
    _, z2 = random_instance(seed + 1)
    z1, z2 = 0.3 * z1, 0.3 * z2  # small enough that no clamp activates
    cfg = FusionConfig(alpha=alpha)
    np.testing.assert_allclose(e2cp_propagate(w, z1 + z2, cfg),
                               e2cp_propagate(w, z1, cfg) + e2cp_propagate(w, z2, cfg), atol=1e-8)


# ---------------------------------------------------------------- adjustment


def test_adjust_examples():
    w = np.array([[1.0, 0.5], [0.5, 1.0]])

    def adj(v):
        return adjust_affinity(w, np.array([[0.0, v], [v, 0.0]]))[0, 1]

    assert adj(0.0) == 0.5
    assert adj(1.0) == 1.0
    assert adj(-1.0) == 0.0
    assert adj(0.5) == 0.75
    assert adj(-0.5) == 0.25


@given(st.floats(0, 1), st.floats(-1, 1), st.floats(-1, 1))
def test_adjust_monotone(wij, f1, f2):
    w = np.array([[1.0, wij], [wij, 1.0]])
    lo, hi = sorted((f1, f2))
    a = adjust_affinity(w, np.array([[0.0, lo], [lo, 0.0]]))
    b = adjust_affinity(w, np.array([[0.0, hi], [hi, 0.0]]))
    assert a[0, 1] <= b[0, 1] + 1e-15
    assert 0.0 <= a[0, 1] <= 1.0 and a[0, 0] == 1.0
