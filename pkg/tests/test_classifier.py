"""Kernel, total-potential, and classification behavior."""

import random

import pytest
from hypothesis import assume, given, strategies as st

from netstate.classifier import (
    ClassLabel,
    ClassifierError,
    DimensionMismatch,
    FeatureVector,
    KernelParams,
    TrainParams,
    UntrainedModelError,
    WeightedVector,
    classify,
    potential,
    total_potential,
)

from conftest import build_model, fv


def oracle_kernel(xq, xj, alpha):
    r2 = sum((a - b) ** 2 for a, b in zip(xq, xj))
    return 1.0 / (1.0 + alpha * r2)


def oracle_potentials(model, y):
    """Independent double-loop recomputation of every class score."""
    out = []
    for cls in model.classes:
        total = 0.0
        for wv in model.weighted:
            if wv.owner.id == cls.id:
                total += wv.weight * oracle_kernel(wv.vector.values, y.values, model.kernel.alpha)
        out.append(total)
    return out


finite_coord = st.floats(min_value=-1e3, max_value=1e3, allow_nan=False, allow_infinity=False)


class TestKernel:
    def test_identity_point(self):
        assert potential(fv(0.7, 0.2), fv(0.7, 0.2), KernelParams(alpha=1.0)) == 1.0

    def test_three_four_five(self):
        assert potential(fv(0, 0), fv(3, 4), KernelParams(alpha=1.0)) == pytest.approx(1 / 26, abs=1e-15)

    def test_half_alpha(self):
        assert potential(fv(1, 1, 1), fv(2, 2, 2), KernelParams(alpha=0.5)) == pytest.approx(0.4, abs=1e-15)

    def test_dim_mismatch(self):
        with pytest.raises(DimensionMismatch):
            potential(fv(1, 2), fv(1, 2, 3), KernelParams())

    def test_non_finite_rejected(self):
        with pytest.raises(ClassifierError):
            fv(1.0, float("nan"))
        with pytest.raises(ClassifierError):
            fv(float("inf"))

    def test_alpha_must_be_positive(self):
        with pytest.raises(ClassifierError):
            KernelParams(alpha=0.0)
        with pytest.raises(ClassifierError):
            KernelParams(alpha=-1.0)

    @given(
        st.lists(finite_coord, min_size=1, max_size=8),
        st.lists(finite_coord, min_size=1, max_size=8),
        st.floats(min_value=1e-3, max_value=1e3),
    )
    def test_range_symmetry_identity(self, a, b, alpha):
        n = min(len(a), len(b))
        x, y = fv(*a[:n]), fv(*b[:n])
        k = KernelParams(alpha=alpha)
        f = potential(x, y, k)
        assert 0.0 < f <= 1.0
        assert potential(y, x, k) == f
        assert potential(x, x, k) == 1.0

    @given(
        st.lists(finite_coord, min_size=1, max_size=8),
        st.lists(finite_coord, min_size=1, max_size=8),
        st.floats(min_value=1e-3, max_value=1e2),
        st.floats(min_value=1.5, max_value=4.0),
    )
    def test_monotone_in_distance_and_alpha(self, a, b, alpha, stretch):
        n = min(len(a), len(b))
        x, y = fv(*a[:n]), fv(*b[:n])
        # strictness saturates in float once alpha*R^2 underflows below epsilon
        r2 = sum((p - q) ** 2 for p, q in zip(x.values, y.values))
        assume(alpha * r2 > 1e-9)
        k = KernelParams(alpha=alpha)
        farther = fv(*(xi + stretch * (yi - xi) for xi, yi in zip(x.values, y.values)))
        assert potential(x, farther, k) < potential(x, y, k)
        assert potential(x, y, KernelParams(alpha=alpha * 2)) < potential(x, y, k)


class TestTotalPotential:
    def test_single_vector_identity(self):
        m = build_model(["A", "B"], [(fv(1, 2), 2.0, 0), (fv(9, 9), 1.0, 1)])
        assert total_potential(m, m.classes[0], fv(1, 2)) == 2.0

    def test_sum_of_two(self):
        m = build_model(["A", "B"], [(fv(0, 0), 1.0, 0), (fv(3, 4), 1.0, 0), (fv(9, 9), 1.0, 1)])
        got = total_potential(m, m.classes[0], fv(0, 0))
        assert got == pytest.approx(1 + 1 / 26, abs=1e-15)

    def test_empty_class_scores_zero(self):
        m = build_model(["A", "B"], [(fv(0, 0), 1.0, 0), (fv(9, 9), 1.0, 1)])
        bare = build_model(["A", "B"], [(fv(9, 9), 1.0, 1)])
        assert total_potential(bare, m.classes[0], fv(0, 0)) == 0.0

    def test_unknown_class(self):
        m = build_model(["A", "B"], [(fv(0, 0), 1.0, 0), (fv(9, 9), 1.0, 1)])
        with pytest.raises(ClassifierError):
            total_potential(m, ClassLabel(id=7, name="ghost"), fv(0, 0))


class TestClassify:
    def test_two_singleton_classes(self, two_cluster_model):
        d = classify(two_cluster_model, fv(1, 0))
        expected = oracle_potentials(two_cluster_model, fv(1, 0))
        assert d.label.name == "A"
        assert d.potentials == pytest.approx(expected, abs=1e-12)
        assert d.potentials[0] == pytest.approx(1 / 2, abs=1e-15)
        assert d.potentials[1] == pytest.approx(1 / 182, abs=1e-15)

    def test_equidistant_with_margin_is_unidentified(self, two_cluster_model):
        from dataclasses import replace

        m = replace(two_cluster_model, epsilon=0.1)
        d = classify(m, fv(5, 5))
        assert d.label is None
        assert d.unidentified
        assert d.margin == 0.0
        assert len(d.potentials) == 2

    def test_tie_breaks_to_lowest_id(self, two_cluster_model):
        d = classify(two_cluster_model, fv(5, 5))
        assert d.label.id == 0
        assert d.margin == 0.0

    def test_untrained_model_rejected(self):
        m = build_model(["A", "B"], [(fv(0, 0), 0.0, 0), (fv(1, 1), 0.0, 1)])
        with pytest.raises(UntrainedModelError):
            classify(m, fv(0, 0))

    def test_random_models_match_oracle(self):
        rng = random.Random(20240817)
        for _ in range(25):
            k = rng.randint(2, 5)
            dim = rng.randint(1, 8)
            n = rng.randint(k, 50)
            weighted = [
                (fv(*(rng.uniform(-5, 5) for _ in range(dim))), rng.uniform(0, 3), rng.randrange(k))
                for _ in range(n)
            ]
            m = build_model([f"c{i}" for i in range(k)], weighted, alpha=rng.uniform(0.1, 5))
            if not m.is_trained():
                continue
            y = fv(*(rng.uniform(-5, 5) for _ in range(dim)))
            d = classify(m, y)
            expected = oracle_potentials(m, y)
            for got, want in zip(d.potentials, expected):
                assert got == pytest.approx(want, abs=1e-12)
            best = max(range(k), key=lambda i: (expected[i], -i))
            assert d.label.id == best

    def test_uniform_weight_scaling_keeps_argmax(self):
        rng = random.Random(99)
        for _ in range(20):
            weighted = [
                (fv(rng.uniform(-3, 3), rng.uniform(-3, 3)), rng.uniform(0.1, 2), rng.randrange(3))
                for _ in range(12)
            ]
            m = build_model(["a", "b", "c"], weighted)
            scaled = build_model(["a", "b", "c"], [(v, w * 37.5, c) for v, w, c in weighted])
            y = fv(rng.uniform(-3, 3), rng.uniform(-3, 3))
            assert classify(m, y).label == classify(scaled, y).label


class TestValidation:
    def test_class_ids_must_be_dense(self):
        with pytest.raises(ClassifierError):
            build_model(["A"], [(fv(0), 1.0, 0)]).__class__(
                classes=(ClassLabel(id=1, name="B"),),
                weighted=(),
                kernel=KernelParams(),
                epsilon=0.0,
                stage2_s=(0.0,),
                stage2_c=(0,),
                memory=(),
                assignments=(),
                training_size=0,
            )

    def test_negative_weight_rejected(self):
        with pytest.raises(ClassifierError):
            WeightedVector(vector=fv(0), weight=-0.5, owner=ClassLabel(id=0, name="A"))

    def test_train_params_validation(self):
        with pytest.raises(ClassifierError):
            TrainParams(delta=0)
        with pytest.raises(ClassifierError):
            TrainParams(max_passes=0)
        with pytest.raises(ClassifierError):
            TrainParams(update_variant="c")
        with pytest.raises(ClassifierError):
            TrainParams(epsilon=-0.1)

    def test_feature_vector_needs_values(self):
        with pytest.raises(ClassifierError):
            FeatureVector(values=())
