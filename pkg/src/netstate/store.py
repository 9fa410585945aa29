"""Durable stores under one data directory.

models/   content-addressed canonical model documents + ACTIVE pointer
history/  append-only segmented JSONL log of classification records
labels.jsonl  labeled training samples, replace-by-key semantics

Serialization is canonical: sorted keys, compact separators, floats at 17
significant digits (exact float64 round-trip) and always carrying a '.'
or exponent so float-vs-int typing survives a round trip. Identical
values therefore serialize to identical bytes, which is what makes
content-addressed model ids and byte-stability tests possible.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from bisect import bisect_right
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Iterator

from netstate.classifier import (
    ClassLabel,
    FeatureVector,
    KernelParams,
    PotentialModel,
    StateDecision,
    TrainingSample,
    WeightedVector,
)
from netstate.features import NormParams

SCHEMA_VERSION = 1

DEFAULT_SEGMENT_RECORDS = 10_000
DEFAULT_RETENTION_RECORDS = 1_000_000


class StoreError(Exception):
    """Typed storage failure (corruption, unknown ids, unwritable disk)."""


# -- canonical JSON --


def _canonical_float(x: float) -> str:
    if not math.isfinite(x):
        raise StoreError(f"cannot serialize non-finite float {x!r}")
    s = format(x, ".17g")
    if "." not in s and "e" not in s and "E" not in s:
        s += ".0"
    return s


def _emit(value, out: list) -> None:
    if value is None:
        out.append("null")
    elif value is True:
        out.append("true")
    elif value is False:
        out.append("false")
    elif isinstance(value, int):
        out.append(str(value))
    elif isinstance(value, float):
        out.append(_canonical_float(value))
    elif isinstance(value, str):
        out.append(json.dumps(value, ensure_ascii=True))
    elif isinstance(value, (list, tuple)):
        out.append("[")
        for i, item in enumerate(value):
            if i:
                out.append(",")
            _emit(item, out)
        out.append("]")
    elif isinstance(value, dict):
        out.append("{")
        for i, key in enumerate(sorted(value)):
            if not isinstance(key, str):
                raise StoreError(f"canonical dict keys must be str, got {key!r}")
            if i:
                out.append(",")
            out.append(json.dumps(key, ensure_ascii=True))
            out.append(":")
            _emit(value[key], out)
        out.append("}")
    else:
        raise StoreError(f"cannot canonically serialize {type(value).__name__}")


def canonical_dumps(value) -> str:
    out: list = []
    _emit(value, out)
    return "".join(out)


def utc_now_iso() -> str:
    # honor SOURCE_DATE_EPOCH (reproducible-builds convention) so offline
    # training can produce byte-identical artifacts
    raw = os.environ.get("SOURCE_DATE_EPOCH")
    if raw is not None:
        try:
            return datetime.fromtimestamp(int(raw), timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
        except (ValueError, OverflowError, OSError):
            pass
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def training_fingerprint(samples: Iterable[TrainingSample]) -> str:
    doc = [
        {
            "vector": list(s.vector.values),
            "label": {"id": s.label.id, "name": s.label.name},
            "source_id": s.source_id,
        }
        for s in samples
    ]
    return hashlib.sha256(canonical_dumps(doc).encode()).hexdigest()


# -- model artifacts --


@dataclass(frozen=True)
class ModelArtifact:
    """Self-contained trained model: classifier state (with its normalizer
    inside), the feature order it expects, provenance and a fingerprint of
    the samples it was trained on."""

    model: PotentialModel
    feature_order: tuple[str, ...]
    created_at: str
    fingerprint: str
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        object.__setattr__(self, "feature_order", tuple(self.feature_order))
        if self.model.norm is not None and self.model.norm.feature_order != self.feature_order:
            raise StoreError("artifact feature_order disagrees with the model's normalizer")

    @property
    def norm(self) -> NormParams | None:
        return self.model.norm


def _model_to_doc(m: PotentialModel) -> dict:
    return {
        "classes": [{"id": c.id, "name": c.name} for c in m.classes],
        "kernel": {"alpha": float(m.kernel.alpha)},
        "epsilon": float(m.epsilon),
        "weighted": [
            {"vector": [float(v) for v in wv.vector.values], "weight": float(wv.weight), "owner": wv.owner.id}
            for wv in m.weighted
        ],
        "stage2_s": [float(s) for s in m.stage2_s],
        "stage2_c": [int(c) for c in m.stage2_c],
        "memory": [[float(v) for v in fv.values] for fv in m.memory],
        "assignments": [int(a) for a in m.assignments],
        "training_size": m.training_size,
        "memory_limit": m.memory_limit,
        "stage1_converged": m.stage1_converged,
        "stage1_passes": m.stage1_passes,
        "stage2_converged": m.stage2_converged,
        "stage2_passes": m.stage2_passes,
        "schema_version": m.schema_version,
        "norm": None
        if m.norm is None
        else {
            "feature_order": list(m.norm.feature_order),
            "means": [float(v) for v in m.norm.means],
            "stds": [float(v) for v in m.norm.stds],
        },
    }


def _model_from_doc(doc: dict) -> PotentialModel:
    classes = tuple(ClassLabel(id=c["id"], name=c["name"]) for c in doc["classes"])
    norm_doc = doc["norm"]
    norm = (
        None
        if norm_doc is None
        else NormParams(
            feature_order=tuple(norm_doc["feature_order"]),
            means=tuple(norm_doc["means"]),
            stds=tuple(norm_doc["stds"]),
        )
    )
    return PotentialModel(
        classes=classes,
        weighted=tuple(
            WeightedVector(
                vector=FeatureVector(tuple(w["vector"])),
                weight=w["weight"],
                owner=classes[w["owner"]],
            )
            for w in doc["weighted"]
        ),
        kernel=KernelParams(alpha=doc["kernel"]["alpha"]),
        epsilon=doc["epsilon"],
        stage2_s=tuple(doc["stage2_s"]),
        stage2_c=tuple(doc["stage2_c"]),
        memory=tuple(FeatureVector(tuple(v)) for v in doc["memory"]),
        assignments=tuple(doc["assignments"]),
        training_size=doc["training_size"],
        norm=norm,
        memory_limit=doc["memory_limit"],
        stage1_converged=doc["stage1_converged"],
        stage1_passes=doc["stage1_passes"],
        stage2_converged=doc["stage2_converged"],
        stage2_passes=doc["stage2_passes"],
        schema_version=doc["schema_version"],
    )


def encode_artifact(artifact: ModelArtifact) -> bytes:
    doc = {
        "schema_version": artifact.schema_version,
        "created_at": artifact.created_at,
        "feature_order": list(artifact.feature_order),
        "fingerprint": artifact.fingerprint,
        "model": _model_to_doc(artifact.model),
    }
    body = canonical_dumps(doc).encode()
    return body + b"\nsha256:" + hashlib.sha256(body).hexdigest().encode() + b"\n"


def artifact_model_id(artifact: ModelArtifact) -> str:
    body = encode_artifact(artifact).rsplit(b"\nsha256:", 1)[0]
    return hashlib.sha256(body).hexdigest()[:12]


def decode_artifact(data: bytes) -> ModelArtifact:
    parts = data.rsplit(b"\nsha256:", 1)
    if len(parts) != 2:
        raise StoreError("model file has no checksum trailer (truncated?)")
    body, tail = parts
    if len(tail) != 65 or not tail.endswith(b"\n"):
        raise StoreError("model checksum trailer is malformed (truncated?)")
    want = tail[:-1].decode("ascii", "replace")
    got = hashlib.sha256(body).hexdigest()
    if want != got:
        raise StoreError(f"model checksum mismatch: file says {want[:12]}…, content is {got[:12]}…")
    try:
        doc = json.loads(body)
        if doc["schema_version"] > SCHEMA_VERSION:
            raise StoreError(
                f"model schema_version {doc['schema_version']} newer than supported {SCHEMA_VERSION}"
            )
        return ModelArtifact(
            model=_model_from_doc(doc["model"]),
            feature_order=tuple(doc["feature_order"]),
            created_at=doc["created_at"],
            fingerprint=doc["fingerprint"],
            schema_version=doc["schema_version"],
        )
    except StoreError:
        raise
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        raise StoreError(f"malformed model document: {exc}") from exc


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    try:
        with open(tmp, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except OSError as exc:
        raise StoreError(f"cannot write {path}: {exc}") from exc


class ModelStore:
    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _path(self, model_id: str) -> Path:
        if not model_id or any(c not in "0123456789abcdef" for c in model_id):
            raise StoreError(f"bad model id {model_id!r}")
        return self.root / f"{model_id}.json"

    def save(self, artifact: ModelArtifact) -> str:
        data = encode_artifact(artifact)
        model_id = hashlib.sha256(data.rsplit(b"\nsha256:", 1)[0]).hexdigest()[:12]
        path = self._path(model_id)
        if not path.exists():  # content-addressed: same artifact, same file
            _atomic_write(path, data)
        return model_id

    def load(self, model_id: str) -> ModelArtifact:
        path = self._path(model_id)
        if not path.exists():
            raise StoreError(f"unknown model {model_id!r}")
        return decode_artifact(path.read_bytes())

    def list_ids(self) -> list[str]:
        return sorted(p.stem for p in self.root.glob("*.json"))

    def list_summaries(self) -> list[dict]:
        out = []
        for model_id in self.list_ids():
            a = self.load(model_id)
            out.append(
                {
                    "model_id": model_id,
                    "created_at": a.created_at,
                    "fingerprint": a.fingerprint,
                    "classes": [c.name for c in a.model.classes],
                    "training_size": a.model.training_size,
                    "stage1_converged": a.model.stage1_converged,
                    "stage2_converged": a.model.stage2_converged,
                }
            )
        out.sort(key=lambda d: (d["created_at"], d["model_id"]))
        return out

    def set_active(self, model_id: str) -> None:
        self.load(model_id)  # must exist and verify
        _atomic_write(self.root / "ACTIVE", (model_id + "\n").encode())

    def get_active(self) -> str | None:
        path = self.root / "ACTIVE"
        if not path.exists():
            return None
        value = path.read_text().strip()
        return value or None

    def export(self, model_id: str, dest: str | Path) -> None:
        data = self._path(model_id).read_bytes() if self._path(model_id).exists() else None
        if data is None:
            raise StoreError(f"unknown model {model_id!r}")
        decode_artifact(data)  # refuse to export corruption
        _atomic_write(Path(dest), data)

    def import_file(self, src: str | Path) -> str:
        try:
            data = Path(src).read_bytes()
        except OSError as exc:
            raise StoreError(f"cannot read {src}: {exc}") from exc
        return self.save(decode_artifact(data))


# -- classification history --


@dataclass(frozen=True)
class StateRecord:
    """One classified (or raw, pre-model) snapshot. ``rates`` are the
    human-unit rates the record was derived from; ``vector`` is the
    normalized point (None before any model exists). record_id is assigned
    by the history store on append."""

    target_id: str
    if_index: int
    timestamp_ms: int
    rates: dict[str, float]
    decision: StateDecision | None
    vector: FeatureVector | None
    recommended_strategy: str | None
    model_id: str | None
    degraded: bool = False
    record_id: int | None = None


def record_to_doc(r: StateRecord) -> dict:
    decision = None
    if r.decision is not None:
        decision = {
            "label": None
            if r.decision.label is None
            else {"id": r.decision.label.id, "name": r.decision.label.name},
            "potentials": [float(p) for p in r.decision.potentials],
            "margin": float(r.decision.margin),
            "decided_at": None if r.decision.decided_at is None else float(r.decision.decided_at),
        }
    return {
        "record_id": r.record_id,
        "target": r.target_id,
        "if_index": r.if_index,
        "ts_ms": r.timestamp_ms,
        "rates": {k: float(v) for k, v in r.rates.items()},
        "decision": decision,
        "vector": None if r.vector is None else [float(v) for v in r.vector.values],
        "strategy": r.recommended_strategy,
        "model_id": r.model_id,
        "degraded": r.degraded,
    }


def record_from_doc(doc: dict) -> StateRecord:
    d = doc["decision"]
    decision = None
    if d is not None:
        label = None if d["label"] is None else ClassLabel(id=d["label"]["id"], name=d["label"]["name"])
        decision = StateDecision(
            label=label,
            potentials=tuple(d["potentials"]),
            margin=d["margin"],
            decided_at=d["decided_at"],
        )
    return StateRecord(
        record_id=doc["record_id"],
        target_id=doc["target"],
        if_index=doc["if_index"],
        timestamp_ms=doc["ts_ms"],
        rates=dict(doc["rates"]),
        decision=decision,
        vector=None if doc["vector"] is None else FeatureVector(tuple(doc["vector"])),
        recommended_strategy=doc["strategy"],
        model_id=doc["model_id"],
        degraded=doc["degraded"],
    )


class HistoryStore:
    """Append-only log, one canonical JSON line per record, split into
    segments named by their first record id. Single writer; readers can
    scan concurrently because every acknowledged line ends with a newline
    and was fsynced before append() returned."""

    def __init__(
        self,
        root: str | Path,
        *,
        segment_records: int = DEFAULT_SEGMENT_RECORDS,
        retention_records: int = DEFAULT_RETENTION_RECORDS,
    ):
        if segment_records < 1 or retention_records < segment_records:
            raise StoreError("retention must be >= segment size >= 1")
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.segment_records = segment_records
        self.retention_records = retention_records
        self._counts: dict[Path, int] = {}
        segments = self._segments()
        if segments:
            for seg in segments:
                self._counts[seg] = sum(1 for _ in self._iter_segment(seg))
            last = segments[-1]
            self._active = last
            self._next_id = _segment_first_id(last) + self._counts[last]
        else:
            self._next_id = 1
            self._active = self._segment_path(1)
            self._counts[self._active] = 0
            self._active.touch()
        self._fh = open(self._active, "a", encoding="utf-8")

    def _segment_path(self, first_id: int) -> Path:
        return self.root / f"seg-{first_id:012d}.jsonl"

    def _segments(self) -> list[Path]:
        return sorted(self.root.glob("seg-*.jsonl"))

    def _iter_segment(self, path: Path) -> Iterator[StateRecord]:
        last_segment = path == self._segments()[-1]
        with open(path, encoding="utf-8") as fh:
            lines = fh.readlines()
        for i, line in enumerate(lines):
            if not line.strip():
                continue
            try:
                yield record_from_doc(json.loads(line))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                if last_segment and i == len(lines) - 1:
                    return  # torn tail from a crash mid-write; never acknowledged
                raise StoreError(f"corrupt history line in {path.name}: {exc}") from exc

    def append(self, record: StateRecord) -> StateRecord:
        if record.record_id is not None:
            raise StoreError("record_id is assigned by the store; pass None")
        stored = replace(record, record_id=self._next_id)
        line = canonical_dumps(record_to_doc(stored)) + "\n"
        try:
            self._fh.write(line)
            self._fh.flush()
            os.fsync(self._fh.fileno())
        except OSError as exc:
            raise StoreError(f"history append failed: {exc}") from exc
        self._next_id += 1
        self._counts[self._active] += 1
        if self._counts[self._active] >= self.segment_records:
            self._rotate()
        return stored

    def _rotate(self) -> None:
        self._fh.close()
        self._active = self._segment_path(self._next_id)
        self._counts[self._active] = 0
        self._active.touch()
        self._fh = open(self._active, "a", encoding="utf-8")
        total = sum(self._counts.values())
        for seg in self._segments():
            if total <= self.retention_records or seg == self._active:
                break
            total -= self._counts.pop(seg)
            seg.unlink()

    def close(self) -> None:
        self._fh.close()

    def count(self) -> int:
        return sum(self._counts.values())

    def get(self, record_id: int) -> StateRecord:
        segments = self._segments()
        firsts = [_segment_first_id(p) for p in segments]
        idx = bisect_right(firsts, record_id) - 1
        if idx >= 0:
            for record in self._iter_segment(segments[idx]):
                if record.record_id == record_id:
                    return record
        raise StoreError(f"unknown record {record_id}")

    def query(
        self,
        *,
        target_id: str | None = None,
        if_index: int | None = None,
        ts_from: int | None = None,
        ts_to: int | None = None,
        label: str | None = None,
        offset: int = 0,
        limit: int | None = None,
    ) -> list[StateRecord]:
        out = []
        for seg in self._segments():
            for r in self._iter_segment(seg):
                if target_id is not None and r.target_id != target_id:
                    continue
                if if_index is not None and r.if_index != if_index:
                    continue
                if ts_from is not None and r.timestamp_ms < ts_from:
                    continue
                if ts_to is not None and r.timestamp_ms > ts_to:
                    continue
                if label is not None and not _label_matches(r, label):
                    continue
                out.append(r)
        out.sort(key=lambda r: r.timestamp_ms)  # stable: ties keep insertion order
        if offset:
            out = out[offset:]
        if limit is not None:
            out = out[:limit]
        return out


UNIDENTIFIED_LABEL = "Unidentified"


def _label_matches(record: StateRecord, label: str) -> bool:
    if record.decision is None:
        return False
    if record.decision.label is None:
        return label == UNIDENTIFIED_LABEL
    return record.decision.label.name == label


def _segment_first_id(path: Path) -> int:
    return int(path.stem.split("-", 1)[1])


# -- labeled training samples --


class LabeledSampleStore:
    """Replace-by-key JSONL store. The key is the originating record id
    when there is one (relabeling a record replaces its sample), else a
    content hash (identical anonymous samples collapse to one)."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._entries: dict[str, dict] = {}
        if self.path.exists():
            with open(self.path, encoding="utf-8") as fh:
                lines = fh.readlines()
            for i, line in enumerate(lines):
                if not line.strip():
                    continue
                try:
                    entry = json.loads(line)
                    self._entries[entry["key"]] = entry
                except (json.JSONDecodeError, KeyError) as exc:
                    if i == len(lines) - 1:
                        break  # torn tail, never acknowledged
                    raise StoreError(f"corrupt labels line {i + 1}: {exc}") from exc
        self._fh = open(self.path, "a", encoding="utf-8")

    def put(
        self,
        features: dict[str, float],
        label: ClassLabel,
        *,
        source_id: str | None = None,
        allowed: Iterable[ClassLabel] | None = None,
    ) -> str:
        if allowed is not None and label not in set(allowed):
            raise StoreError(f"unknown label {label.name!r} (id {label.id})")
        features = {k: float(v) for k, v in features.items()}
        if source_id is not None:
            key = source_id
        else:
            digest = hashlib.sha256(canonical_dumps([features, label.id]).encode()).hexdigest()
            key = f"v:{digest[:16]}"
        entry = {
            "key": key,
            "features": features,
            "label": {"id": label.id, "name": label.name},
            "source_id": source_id,
        }
        if self._entries.get(key) == entry:
            return key  # idempotent: do not grow the log
        try:
            self._fh.write(canonical_dumps(entry) + "\n")
            self._fh.flush()
            os.fsync(self._fh.fileno())
        except OSError as exc:
            raise StoreError(f"labels append failed: {exc}") from exc
        self._entries[key] = entry
        return key

    def samples(self, feature_order: tuple[str, ...]) -> list[TrainingSample]:
        """Raw-rate training samples in insertion order, deduplicated by
        (vector, label): the trainer normalizes these after refitting."""
        out = []
        seen = set()
        for entry in self._entries.values():
            missing = [n for n in feature_order if n not in entry["features"]]
            if missing:
                raise StoreError(f"labeled sample {entry['key']} missing features {missing}")
            values = tuple(float(entry["features"][n]) for n in feature_order)
            label = ClassLabel(id=entry["label"]["id"], name=entry["label"]["name"])
            if (values, label.id) in seen:
                continue
            seen.add((values, label.id))
            out.append(
                TrainingSample(vector=FeatureVector(values), label=label, source_id=entry["source_id"])
            )
        return out

    def class_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        seen = set()
        for entry in self._entries.values():
            key = (tuple(sorted(entry["features"].items())), entry["label"]["id"])
            if key in seen:
                continue
            seen.add(key)
            name = entry["label"]["name"]
            counts[name] = counts.get(name, 0) + 1
        return counts

    def get(self, key: str) -> dict | None:
        return self._entries.get(key)

    def entries(self) -> list[dict]:
        return [dict(e) for e in self._entries.values()]

    def __len__(self) -> int:
        return len(self._entries)

    def close(self) -> None:
        self._fh.close()


class DataStore:
    """Everything the service persists, rooted at one directory."""

    def __init__(
        self,
        data_dir: str | Path,
        *,
        segment_records: int = DEFAULT_SEGMENT_RECORDS,
        retention_records: int = DEFAULT_RETENTION_RECORDS,
    ):
        self.root = Path(data_dir)
        self.root.mkdir(parents=True, exist_ok=True)
        self.models = ModelStore(self.root / "models")
        self.history = HistoryStore(
            self.root / "history",
            segment_records=segment_records,
            retention_records=retention_records,
        )
        self.labels = LabeledSampleStore(self.root / "labels.jsonl")

    def close(self) -> None:
        self.history.close()
        self.labels.close()
