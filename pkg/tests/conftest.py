import random

import pytest

from netstate.classifier import (
    ClassLabel,
    FeatureVector,
    KernelParams,
    PotentialModel,
    TrainingSample,
    WeightedVector,
)


def fv(*values) -> FeatureVector:
    return FeatureVector(values=tuple(float(v) for v in values))


def build_model(
    classes,
    weighted,
    alpha=1.0,
    epsilon=0.0,
    stage2_s=None,
    stage2_c=None,
    memory=None,
    assignments=None,
):
    """Assemble a PotentialModel from terse specs for tests.

    classes: list of names; weighted: list of (vector, weight, class_id).
    Memory defaults to the weighted vectors with their owners as
    assignments, so the stage-2 count invariant holds.
    """
    labels = tuple(ClassLabel(id=i, name=n) for i, n in enumerate(classes))
    wvs = tuple(WeightedVector(vector=v, weight=w, owner=labels[cid]) for v, w, cid in weighted)
    if memory is None:
        memory = tuple(wv.vector for wv in wvs)
        assignments = tuple(wv.owner.id for wv in wvs)
    if stage2_c is None:
        counts = [0] * len(labels)
        for a in assignments:
            if a >= 0:
                counts[a] += 1
        stage2_c = tuple(counts)
    if stage2_s is None:
        stage2_s = (0.0,) * len(labels)
    return PotentialModel(
        classes=labels,
        weighted=wvs,
        kernel=KernelParams(alpha=alpha),
        epsilon=epsilon,
        stage2_s=tuple(stage2_s),
        stage2_c=tuple(stage2_c),
        memory=tuple(memory),
        assignments=tuple(assignments),
        training_size=len(memory),
    )


def gaussian_samples(seed, n_per_class, centers, names=None, stddev=1.0):
    """Fixed-seed Gaussian clusters, one class per center, interleaved in
    presentation order."""
    rng = random.Random(seed)
    names = names or [f"class{i}" for i in range(len(centers))]
    labels = [ClassLabel(id=i, name=names[i]) for i in range(len(centers))]
    samples = []
    for i in range(n_per_class):
        for cid, center in enumerate(centers):
            vec = fv(*(rng.gauss(c, stddev) for c in center))
            samples.append(TrainingSample(vector=vec, label=labels[cid]))
    return samples


@pytest.fixture
def two_cluster_model():
    """Two singleton classes far apart: A at the origin, B at (10, 10)."""
    return build_model(["A", "B"], [(fv(0, 0), 1.0, 0), (fv(10, 10), 1.0, 1)])


def desk_scenarios(duration=250, interval=5):
    """The four-state desk fixture shared by synth, service, and
    end-to-end tests: one scenario per reference state, fixed seeds."""
    from netstate.synth import Scenario

    return [
        (Scenario("normal", duration, 101), ClassLabel(0, "Normal")),
        (Scenario("congestion", duration, 102), ClassLabel(1, "Congestion")),
        (Scenario("error-burst", duration, 103), ClassLabel(2, "ErrorBurst")),
        (Scenario("broadcast-storm", duration, 104), ClassLabel(3, "BroadcastStorm")),
    ]


def desk_classes():
    """Class set matching desk_scenarios, with strategies for each."""
    from netstate.config import ClassDef

    return (
        ClassDef(ClassLabel(0, "Normal"), "#2e7d32", "steady-state monitoring"),
        ClassDef(ClassLabel(1, "Congestion"), "#ef6c00", "shape or reroute bulk traffic"),
        ClassDef(ClassLabel(2, "ErrorBurst"), "#c62828", "inspect cabling and duplex"),
        ClassDef(ClassLabel(3, "BroadcastStorm"), "#6a1b9a", "isolate the chattering segment"),
    )


def desk_config(data_dir, **kw):
    from netstate.config import ServiceConfig

    return ServiceConfig(classes=desk_classes(), data_dir=data_dir, **kw)
