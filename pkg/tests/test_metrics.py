import numpy as np
import pytest

from strokecad.metrics import class_weights, cls_loss, curve_accuracy, face_iou, reg_loss
from strokecad.operators import OP_ADDSUB, OP_BEVEL, OP_EXTRUDE, OP_SWEEP


def test_identical_maps_full_scores():
    F = np.zeros((256, 256))
    F[40:90, 60:120] = 1.0
    C = np.zeros((256, 256))
    C[10, 10:90] = 1.0
    M = (C != 0).astype(float)
    assert face_iou(F, F) == 100.0
    assert curve_accuracy(C, C, M) == 100.0


def test_disjoint_faces_zero_iou():
    A = np.zeros((256, 256))
    B = np.zeros((256, 256))
    A[:50, :50] = 1.0
    B[100:150, 100:150] = 1.0
    assert face_iou(A, B) == 0.0


def test_half_overlap_is_one_third():
    A = np.zeros((256, 256))
    B = np.zeros((256, 256))
    A[0:100, 0:100] = 1.0
    B[0:100, 50:150] = 1.0
    assert abs(face_iou(A, B) - 100.0 / 3.0) < 1e-9


def test_empty_union_defined_as_zero():
    Z = np.zeros((8, 8))
    assert face_iou(Z, Z) == 0.0


def test_class_weights_match_hand_normalization():
    counts = {OP_EXTRUDE: 10, OP_BEVEL: 10, OP_ADDSUB: 40, OP_SWEEP: 20}
    w = class_weights(counts)
    assert abs(w[OP_EXTRUDE] - 0.3636) < 1e-4
    assert abs(w[OP_BEVEL] - 0.3636) < 1e-4
    assert abs(w[OP_ADDSUB] - 0.0909) < 1e-4
    assert abs(w[OP_SWEEP] - 0.1818) < 1e-4
    assert abs(sum(w.values()) - 1.0) < 1e-12


def test_class_weights_scale_invariant():
    counts = {OP_EXTRUDE: 10, OP_BEVEL: 10, OP_ADDSUB: 40, OP_SWEEP: 20}
    scaled = {k: 7 * v for k, v in counts.items()}
    w1, w2 = class_weights(counts), class_weights(scaled)
    for t in w1:
        assert abs(w1[t] - w2[t]) < 1e-12


def test_cls_loss_zero_at_certainty():
    counts = {OP_EXTRUDE: 10, OP_BEVEL: 10, OP_ADDSUB: 40, OP_SWEEP: 20}
    probs = {OP_EXTRUDE: 1.0, OP_BEVEL: 0.0, OP_ADDSUB: 0.0, OP_SWEEP: 0.0}
    assert cls_loss(probs, OP_EXTRUDE, counts) == 0.0
    probs2 = dict(probs, **{OP_EXTRUDE: 0.5, OP_BEVEL: 0.5})
    assert cls_loss(probs2, OP_EXTRUDE, counts) > 0.0


def test_cls_loss_rejects_zero_counts():
    with pytest.raises(ValueError):
        cls_loss({OP_EXTRUDE: 1.0}, OP_EXTRUDE,
                 {OP_EXTRUDE: 0, OP_BEVEL: 1, OP_ADDSUB: 1, OP_SWEEP: 1})


def test_reg_loss_zero_at_ground_truth():
    rng = np.random.default_rng(0)
    F = (rng.random((256, 256)) > 0.7).astype(float)
    C = rng.integers(0, 3, (256, 256)).astype(float)
    M = (rng.random((256, 256)) > 0.9).astype(float)
    assert reg_loss(F, F, C, C, M) == 0.0
    assert reg_loss(F, 1.0 - F, C, C, M) > 0.0


def test_reg_loss_formula():
    F = np.zeros((256, 256))
    F_gt = np.zeros((256, 256))
    F[0, 0] = 1.0
    C = np.zeros((256, 256))
    C_gt = np.zeros((256, 256))
    C[5, 5] = 2.0
    M = np.zeros((256, 256))
    M[5, 5] = 1.0
    M[5, 6] = 1.0
    expected = 1.0 / 256 ** 2 + (1.0 * (2.0 ** 2)) / 2.0
    assert abs(reg_loss(F, F_gt, C, C_gt, M) - expected) < 1e-12
