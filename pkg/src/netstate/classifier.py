"""Deterministic potential-function state classifier.

Pure value-semantics implementation of the two-stage potential-function
pattern recognition method: a rational similarity kernel, per-class total
potentials, margin classification with an "unidentified" zone, stage-1
weight training, stage-2 decision-function bookkeeping, and online
recognition with reorganization. All operations return new model values;
nothing here mutates shared state, so any number of callers may use a
model concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import TYPE_CHECKING, Iterable, Sequence

if TYPE_CHECKING:  # pragma: no cover - import only for annotations
    from netstate.features import NormParams


class ClassifierError(ValueError):
    """Base error for classifier misuse."""


class DimensionMismatch(ClassifierError):
    pass


class UntrainedModelError(ClassifierError):
    pass


@dataclass(frozen=True)
class FeatureVector:
    """A normalized n-dimensional point describing one network snapshot."""

    values: tuple[float, ...]

    def __post_init__(self):
        values = tuple(float(v) for v in self.values)
        if not values:
            raise ClassifierError("feature vector must have dim >= 1")
        for v in values:
            if not math.isfinite(v):
                raise ClassifierError(f"non-finite feature value: {v!r}")
        object.__setattr__(self, "values", values)

    @property
    def dim(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class ClassLabel:
    id: int
    name: str

    def __post_init__(self):
        if self.id < 0:
            raise ClassifierError(f"class id must be >= 0, got {self.id}")


@dataclass(frozen=True)
class TrainingSample:
    vector: FeatureVector
    label: ClassLabel
    source_id: str | None = None


@dataclass(frozen=True)
class KernelParams:
    """Parameters of the similarity kernel 1 / (1 + alpha * R^2)."""

    alpha: float = 1.0

    def __post_init__(self):
        if not (self.alpha > 0 and math.isfinite(self.alpha)):
            raise ClassifierError(f"kernel alpha must be > 0, got {self.alpha}")


@dataclass(frozen=True)
class WeightedVector:
    """A stored training vector with its learned weight inside one class."""

    vector: FeatureVector
    weight: float
    owner: ClassLabel

    def __post_init__(self):
        if self.weight < 0:
            raise ClassifierError(f"weight must be >= 0, got {self.weight}")


@dataclass(frozen=True)
class TrainParams:
    delta: float = 1.0
    max_passes: int = 20
    update_variant: str = "a"
    epsilon: float = 0.0

    def __post_init__(self):
        if not self.delta > 0:
            raise ClassifierError(f"delta must be > 0, got {self.delta}")
        if self.max_passes < 1:
            raise ClassifierError(f"max_passes must be >= 1, got {self.max_passes}")
        if self.update_variant not in ("a", "b"):
            raise ClassifierError(f"update variant must be 'a' or 'b', got {self.update_variant!r}")
        if self.epsilon < 0:
            raise ClassifierError(f"epsilon must be >= 0, got {self.epsilon}")


DEFAULT_MEMORY_LIMIT = 10_000


@dataclass(frozen=True)
class PotentialModel:
    """Immutable snapshot of a trained (or in-training) classifier.

    ``weighted`` is the stage-1 weight table. ``memory`` holds the
    recognized-vector sequence (training vectors first, online adoptions
    appended), ``assignments`` the current class id of each memory vector
    (-1 for stored-but-unidentified ones). ``stage2_s``/``stage2_c`` are the
    per-class decision scalars and member counts kept in step with
    ``assignments``.
    """

    classes: tuple[ClassLabel, ...]
    weighted: tuple[WeightedVector, ...]
    kernel: KernelParams
    epsilon: float
    stage2_s: tuple[float, ...]
    stage2_c: tuple[int, ...]
    memory: tuple[FeatureVector, ...]
    assignments: tuple[int, ...]
    training_size: int
    norm: "NormParams | None" = None
    memory_limit: int = DEFAULT_MEMORY_LIMIT
    stage1_converged: bool = False
    stage1_passes: int = 0
    stage2_converged: bool = False
    stage2_passes: int = 0
    schema_version: int = 1

    def __post_init__(self):
        ids = [c.id for c in self.classes]
        if ids != list(range(len(ids))):
            raise ClassifierError(f"class ids must be dense 0..K-1, got {ids}")
        if self.epsilon < 0:
            raise ClassifierError("epsilon must be >= 0")
        if len(self.stage2_s) != len(self.classes) or len(self.stage2_c) != len(self.classes):
            raise ClassifierError("stage-2 scalars must have one entry per class")
        if len(self.memory) != len(self.assignments):
            raise ClassifierError("assignments must parallel the memory sequence")
        for wv in self.weighted:
            if wv.owner.id >= len(self.classes):
                raise ClassifierError(f"weighted vector owned by unknown class {wv.owner}")

    @property
    def num_classes(self) -> int:
        return len(self.classes)

    @property
    def dim(self) -> int | None:
        if self.memory:
            return self.memory[0].dim
        if self.weighted:
            return self.weighted[0].vector.dim
        return None

    def class_by_id(self, class_id: int) -> ClassLabel:
        if not 0 <= class_id < len(self.classes):
            raise ClassifierError(f"unknown class id {class_id}")
        return self.classes[class_id]

    def class_by_name(self, name: str) -> ClassLabel:
        for c in self.classes:
            if c.name == name:
                return c
        raise ClassifierError(f"unknown class name {name!r}")

    def is_trained(self) -> bool:
        return len(self.classes) >= 2 and any(wv.weight > 0 for wv in self.weighted)


@dataclass(frozen=True)
class StateDecision:
    """Classification outcome: label is None when the vector fell inside
    the epsilon margin and is deliberately left unidentified."""

    label: ClassLabel | None
    potentials: tuple[float, ...]
    margin: float
    decided_at: float | None = None

    @property
    def unidentified(self) -> bool:
        return self.label is None


def potential(x_q: FeatureVector, x_j: FeatureVector, kernel: KernelParams) -> float:
    """Kernel value 1 / (1 + alpha * R^2), R^2 the squared Euclidean
    distance between the two points. Always in (0, 1]."""
    if x_q.dim != x_j.dim:
        raise DimensionMismatch(f"dim mismatch: {x_q.dim} vs {x_j.dim}")
    r2 = 0.0
    for a, b in zip(x_q.values, x_j.values):
        d = b - a
        r2 += d * d
    return 1.0 / (1.0 + kernel.alpha * r2)


def total_potential(model: PotentialModel, label: ClassLabel, y: FeatureVector) -> float:
    """Class score: weighted sum of kernel values from every stored vector
    of the class to y. A class with no stored vectors scores 0."""
    model.class_by_id(label.id)
    total = 0.0
    for wv in model.weighted:
        if wv.owner.id == label.id:
            total += wv.weight * potential(wv.vector, y, model.kernel)
    return total


def _class_potentials(model: PotentialModel, y: FeatureVector) -> list[float]:
    totals = [0.0] * len(model.classes)
    for wv in model.weighted:
        totals[wv.owner.id] += wv.weight * potential(wv.vector, y, model.kernel)
    return totals


def _argmax_and_margin(potentials: Sequence[float]) -> tuple[int, float]:
    # ties break to the lowest class id (strict > keeps the first max)
    best = 0
    for i in range(1, len(potentials)):
        if potentials[i] > potentials[best]:
            best = i
    runner_up = max(p for i, p in enumerate(potentials) if i != best)
    return best, potentials[best] - runner_up


def classify(model: PotentialModel, y: FeatureVector, decided_at: float | None = None) -> StateDecision:
    """Assign y to the class with the highest total potential.

    The margin is best minus runner-up; when the model has a positive
    epsilon and the margin does not exceed it, the decision is returned
    unidentified (label None) with potentials still populated.
    """
    if not model.is_trained():
        raise UntrainedModelError("model has no positively weighted vectors or fewer than 2 classes")
    potentials = _class_potentials(model, y)
    best, margin = _argmax_and_margin(potentials)
    label: ClassLabel | None = model.classes[best]
    if model.epsilon > 0 and margin <= model.epsilon:
        label = None
    return StateDecision(label=label, potentials=tuple(potentials), margin=margin, decided_at=decided_at)


def stage1_needs_update(
    model: PotentialModel, x_r: FeatureVector, true_class: ClassLabel, epsilon: float
) -> bool:
    """True when the presented vector is misclassified or inside the
    margin: K(true) - max over competitors K(g) <= epsilon."""
    if model.num_classes < 2:
        raise ClassifierError("stage-1 update check needs at least 2 classes")
    model.class_by_id(true_class.id)
    potentials = _class_potentials(model, x_r)
    own = potentials[true_class.id]
    competitor = max(p for i, p in enumerate(potentials) if i != true_class.id)
    return own - competitor <= epsilon


def _competitor_class(model: PotentialModel, potentials: Sequence[float], true_id: int) -> int:
    best = None
    for i, p in enumerate(potentials):
        if i == true_id:
            continue
        if best is None or p > potentials[best]:
            best = i
    assert best is not None
    return best


def apply_stage1_update(
    model: PotentialModel, x_r: FeatureVector, true_class: ClassLabel, params: TrainParams
) -> PotentialModel:
    """One stage-1 weight reorganization step for (x_r, true_class).

    Variant "a": the stored copy of x_r inside the true class gains delta
    (inserted with weight delta when absent). Variant "b" additionally
    finds the argmax competitor class and decrements the weight of its
    stored vector nearest to x_r (highest kernel value), floored at 0.
    """
    weighted = list(model.weighted)
    for i, wv in enumerate(weighted):
        if wv.owner.id == true_class.id and wv.vector.values == x_r.values:
            weighted[i] = replace(wv, weight=wv.weight + params.delta)
            break
    else:
        weighted.append(WeightedVector(vector=x_r, weight=params.delta, owner=model.class_by_id(true_class.id)))

    if params.update_variant == "b":
        potentials = _class_potentials(model, x_r)
        g = _competitor_class(model, potentials, true_class.id)
        nearest = None
        nearest_f = -1.0
        for i, wv in enumerate(weighted):
            if wv.owner.id != g:
                continue
            f = potential(wv.vector, x_r, model.kernel)
            if f > nearest_f:
                nearest, nearest_f = i, f
        if nearest is not None:
            wv = weighted[nearest]
            weighted[nearest] = replace(wv, weight=max(0.0, wv.weight - params.delta))

    return replace(model, weighted=tuple(weighted))


def _validate_sequence(sequence: Sequence[TrainingSample]) -> tuple[ClassLabel, ...]:
    if not sequence:
        raise ClassifierError("training sequence is empty")
    dim = sequence[0].vector.dim
    by_id: dict[int, ClassLabel] = {}
    for s in sequence:
        if s.vector.dim != dim:
            raise DimensionMismatch(f"mixed dims in training sequence: {dim} vs {s.vector.dim}")
        seen = by_id.setdefault(s.label.id, s.label)
        if seen.name != s.label.name:
            raise ClassifierError(f"conflicting names for class id {s.label.id}: {seen.name!r} vs {s.label.name!r}")
    ids = sorted(by_id)
    if len(ids) < 2:
        raise ClassifierError("training sequence needs at least 2 distinct labels")
    if ids != list(range(len(ids))):
        raise ClassifierError(f"class ids must be dense 0..K-1, got {ids}")
    return tuple(by_id[i] for i in ids)


def train_stage1(
    sequence: Sequence[TrainingSample],
    params: TrainParams,
    kernel: KernelParams,
    norm: "NormParams | None" = None,
    memory_limit: int = DEFAULT_MEMORY_LIMIT,
) -> PotentialModel:
    """Stage-1 training: present the sequence in order, repeatedly, and
    reorganize weights whenever a vector is not identified with margin
    above epsilon. Stops on the first clean pass or after max_passes.

    The returned model carries the training vectors in memory with their
    given labels as assignments, per-class counts in stage2_c, and
    stage2_s zeroed, ready for train_stage2.
    """
    classes = _validate_sequence(sequence)
    counts = [0] * len(classes)
    for s in sequence:
        counts[s.label.id] += 1
    model = PotentialModel(
        classes=classes,
        weighted=(),
        kernel=kernel,
        epsilon=params.epsilon,
        stage2_s=(0.0,) * len(classes),
        stage2_c=tuple(counts),
        memory=tuple(s.vector for s in sequence),
        assignments=tuple(s.label.id for s in sequence),
        training_size=len(sequence),
        norm=norm,
        memory_limit=memory_limit,
    )
    converged = False
    passes = 0
    for _ in range(params.max_passes):
        passes += 1
        updates = 0
        for s in sequence:
            if stage1_needs_update(model, s.vector, s.label, params.epsilon):
                model = apply_stage1_update(model, s.vector, s.label, params)
                updates += 1
        if updates == 0:
            converged = True
            break
    return replace(model, stage1_converged=converged, stage1_passes=passes)


def _reassign_score(
    model: PotentialModel, potentials: Sequence[float], from_id: int, to_id: int
) -> float:
    """Gain in the target class's mean potential from adopting the vector,
    minus the loss in the current class's mean from releasing it."""
    s_q, c_q = model.stage2_s[to_id], model.stage2_c[to_id]
    s_i, c_i = model.stage2_s[from_id], model.stage2_c[from_id]
    old_mean_q = s_q / c_q if c_q > 0 else 0.0
    gain = (s_q + potentials[to_id]) / (c_q + 1) - old_mean_q
    loss = s_i / c_i - (s_i - potentials[from_id]) / (c_i - 1)
    return gain - loss


def stage2_needs_reassign(
    model: PotentialModel, x_j: FeatureVector, current_class: ClassLabel
) -> ClassLabel | None:
    """Return the class that should adopt x_j, or None to keep it.

    The winning class maximizes the mean-potential reassignment score and
    must score strictly positive. Never empties a class: when the current
    class holds a single vector the answer is always None.
    """
    i = current_class.id
    model.class_by_id(i)
    if model.stage2_c[i] < 1:
        raise ClassifierError(f"class {current_class.name!r} has no assigned vectors")
    if model.stage2_c[i] == 1:
        return None
    potentials = _class_potentials(model, x_j)
    best: ClassLabel | None = None
    best_score = 0.0
    for cls in model.classes:
        if cls.id == i:
            continue
        score = _reassign_score(model, potentials, i, cls.id)
        if score > best_score:
            best, best_score = cls, score
    return best


def apply_stage2_update(
    model: PotentialModel,
    x_j: FeatureVector,
    from_class: ClassLabel,
    to_class: ClassLabel,
    index: int | None = None,
) -> PotentialModel:
    """Move x_j's bookkeeping from one class to another:
    S[to] += K(to, x_j), c[to] += 1, S[from] -= K(from, x_j), c[from] -= 1,
    and flip the memory assignment."""
    if from_class.id == to_class.id:
        raise ClassifierError("stage-2 update requires two distinct classes")
    model.class_by_id(from_class.id)
    model.class_by_id(to_class.id)
    if model.stage2_c[from_class.id] < 1:
        raise ClassifierError(f"class {from_class.name!r} has no vectors to release")
    if index is None:
        for idx, (vec, a) in enumerate(zip(model.memory, model.assignments)):
            if a == from_class.id and vec.values == x_j.values:
                index = idx
                break
        else:
            raise ClassifierError("x_j is not a memory vector assigned to the source class")
    elif model.assignments[index] != from_class.id:
        raise ClassifierError(f"memory vector {index} is not assigned to class {from_class.name!r}")

    s = list(model.stage2_s)
    c = list(model.stage2_c)
    s[to_class.id] += total_potential(model, to_class, x_j)
    c[to_class.id] += 1
    s[from_class.id] -= total_potential(model, from_class, x_j)
    c[from_class.id] -= 1
    assignments = list(model.assignments)
    assignments[index] = to_class.id
    return replace(model, stage2_s=tuple(s), stage2_c=tuple(c), assignments=tuple(assignments))


def train_stage2(
    model: PotentialModel, sequence: Sequence[TrainingSample], params: TrainParams
) -> PotentialModel:
    """Stage-2 training: sweep the training sequence, reassigning vectors
    between classes while any reassignment scores positive. Stops on the
    first sweep with zero reassignments or after max_passes. The total of
    stage2_c is conserved throughout."""
    if len(sequence) != model.training_size:
        raise ClassifierError(
            f"sequence length {len(sequence)} does not match the model's training size {model.training_size}"
        )
    for idx, s in enumerate(sequence):
        if model.memory[idx].values != s.vector.values:
            raise ClassifierError(f"sequence vector {idx} differs from the model's training memory")
    converged = False
    passes = 0
    for _ in range(params.max_passes):
        passes += 1
        changes = 0
        for idx in range(model.training_size):
            current = model.class_by_id(model.assignments[idx])
            target = stage2_needs_reassign(model, model.memory[idx], current)
            if target is not None:
                model = apply_stage2_update(model, model.memory[idx], current, target, index=idx)
                changes += 1
        if changes == 0:
            converged = True
            break
    return replace(model, stage2_converged=converged, stage2_passes=passes)


def recognize_online(
    model: PotentialModel,
    stream: Iterable[FeatureVector],
    decided_at: float | None = None,
) -> tuple[list[StateDecision], PotentialModel]:
    """Classify a stream in order while absorbing each identified vector
    into the class bookkeeping (S[p] += K(p, x), c[p] += 1) and appending
    it to the recognized-vector memory. Unidentified vectors are stored
    but update nothing. Memory is bounded: once past memory_limit the
    oldest non-training vectors are evicted first, with their bookkeeping
    contribution removed so S/c stay consistent with memory contents.
    """
    if not model.is_trained():
        raise UntrainedModelError("online recognition requires a trained model")
    decisions: list[StateDecision] = []
    memory = list(model.memory)
    assignments = list(model.assignments)
    s = list(model.stage2_s)
    c = list(model.stage2_c)
    for y in stream:
        decision = classify(model, y, decided_at=decided_at)
        decisions.append(decision)
        memory.append(y)
        if decision.label is not None:
            p = decision.label.id
            s[p] += decision.potentials[p]
            c[p] += 1
            assignments.append(p)
        else:
            assignments.append(-1)
        while len(memory) > model.memory_limit and len(memory) > model.training_size:
            evicted_vec = memory.pop(model.training_size)
            evicted_a = assignments.pop(model.training_size)
            if evicted_a >= 0:
                s[evicted_a] -= total_potential(model, model.classes[evicted_a], evicted_vec)
                c[evicted_a] -= 1
    updated = replace(
        model,
        memory=tuple(memory),
        assignments=tuple(assignments),
        stage2_s=tuple(s),
        stage2_c=tuple(c),
    )
    return decisions, updated
