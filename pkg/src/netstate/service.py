"""Management daemon core.

Wires the poll scheduler into the feature pipeline and the classifier,
maintains per-stream live state, appends every classified snapshot to the
history store, fans out events to stream subscribers, and runs
operator-triggered retraining in a single-flight background job.

The core is transport-free: the HTTP layer sits on top and every
operation here is callable directly from tests.
"""

from __future__ import annotations

import logging
import queue
import threading
import time
from dataclasses import dataclass
from typing import Callable, Sequence

from netstate.classifier import (
    ClassifierError,
    FeatureVector,
    KernelParams,
    PotentialModel,
    StateDecision,
    TrainingSample,
    TrainParams,
    classify,
    recognize_online,
    train_stage1,
    train_stage2,
)
from netstate.config import ServiceConfig
from netstate.features import (
    FEATURES_V1,
    CounterSnapshot,
    PipelineError,
    RateVector,
    StreamCursor,
    fit_normalizer,
    normalize,
)
from netstate.snmp.client import Target, poll_once
from netstate.snmp.scheduler import PollEvent, PollScheduler
from netstate.store import (
    DataStore,
    ModelArtifact,
    StateRecord,
    StoreError,
    record_to_doc,
    training_fingerprint,
    utc_now_iso,
)

log = logging.getLogger("netstate.service")

# health of a stream no poll result has arrived for yet
HEALTH_UNKNOWN = "unknown"
HEALTH_OK = "ok"
HEALTH_DEGRADED = "degraded"
HEALTH_UNREACHABLE = "unreachable"

SUBSCRIBER_QUEUE_LIMIT = 256


class ServiceError(Exception):
    """Operation failure with a wire-ready error code and HTTP status."""

    def __init__(self, code: str, message: str, status: int = 400):
        super().__init__(message)
        self.code = code
        self.message = message
        self.status = status


def not_found(message: str) -> ServiceError:
    return ServiceError("not_found", message, 404)


def bad_request(message: str) -> ServiceError:
    return ServiceError("bad_request", message, 400)


@dataclass
class StreamState:
    target_id: str
    if_index: int
    health: str = HEALTH_UNKNOWN
    ts_ms: int | None = None
    rates: dict[str, float] | None = None
    decision: StateDecision | None = None
    strategy: str | None = None
    model_id: str | None = None

    def to_doc(self) -> dict:
        decision = None
        if self.decision is not None:
            d = self.decision
            decision = {
                "label": None if d.label is None else {"id": d.label.id, "name": d.label.name},
                "potentials": list(d.potentials),
                "margin": d.margin,
                "decided_at": d.decided_at,
            }
        return {
            "target": self.target_id,
            "if_index": self.if_index,
            "health": self.health,
            "ts_ms": self.ts_ms,
            "rates": self.rates,
            "decision": decision,
            "strategy": self.strategy,
            "model_id": self.model_id,
        }


class Subscriber:
    """One event-stream consumer. The queue is bounded; when a consumer
    lags the oldest pending events are dropped so the pipeline never
    blocks on a slow reader."""

    def __init__(self, limit: int = SUBSCRIBER_QUEUE_LIMIT):
        self._q: queue.Queue = queue.Queue(maxsize=limit)
        self.dropped = 0

    def offer(self, event: str, doc: dict) -> None:
        while True:
            try:
                self._q.put_nowait((event, doc))
                return
            except queue.Full:
                try:
                    self._q.get_nowait()
                    self.dropped += 1
                except queue.Empty:  # racing consumer; retry the put
                    pass

    def get(self, timeout: float | None = None):
        try:
            return self._q.get(timeout=timeout)
        except queue.Empty:
            return None


@dataclass(frozen=True)
class TrainingResult:
    artifact: ModelArtifact
    report: dict


def run_training(
    samples: Sequence[TrainingSample],
    params: TrainParams,
    kernel: KernelParams,
    *,
    memory_limit: int,
    fit_norm: bool = True,
    feature_order: tuple[str, ...] = FEATURES_V1,
) -> TrainingResult:
    """Shared offline/online training path: (optionally) refit the
    normalizer on the raw-rate samples, run both training stages, and
    wrap the result as a storable artifact plus a convergence report.

    The CLI and the service both call this, so their reports agree for
    identical inputs.
    """
    if fit_norm:
        ratevecs = [
            RateVector(interval_s=1.0, values=dict(zip(feature_order, s.vector.values)))
            for s in samples
        ]
        norm = fit_normalizer(ratevecs, feature_order)
        sequence = [
            TrainingSample(normalize(rv, norm), s.label, s.source_id)
            for rv, s in zip(ratevecs, samples)
        ]
    else:
        norm = None
        sequence = list(samples)

    model = train_stage1(sequence, params, kernel, norm=norm, memory_limit=memory_limit)
    model = train_stage2(model, sequence, params)

    correct = sum(1 for s in sequence if classify(model, s.vector).label == s.label)
    artifact = ModelArtifact(
        model=model,
        feature_order=feature_order,
        created_at=utc_now_iso(),
        fingerprint=training_fingerprint(samples),
    )
    counts: dict[str, int] = {}
    for s in samples:
        counts[s.label.name] = counts.get(s.label.name, 0) + 1
    report = {
        "sample_count": len(samples),
        "class_counts": counts,
        "stage1_converged": model.stage1_converged,
        "stage1_passes": model.stage1_passes,
        "stage2_converged": model.stage2_converged,
        "stage2_passes": model.stage2_passes,
        "converged": model.stage1_converged and model.stage2_converged,
        "training_accuracy": correct / len(sequence) if sequence else 0.0,
        "fingerprint": artifact.fingerprint,
        "params": {
            "delta": params.delta,
            "alpha": kernel.alpha,
            "epsilon": params.epsilon,
            "max_passes": params.max_passes,
            "variant": params.update_variant,
        },
    }
    return TrainingResult(artifact=artifact, report=report)


_OVERRIDE_KEYS = ("delta", "alpha", "epsilon", "max_passes", "variant")


def _merge_params(
    base: TrainParams, kernel: KernelParams, overrides: dict | None
) -> tuple[TrainParams, KernelParams]:
    if not overrides:
        return base, kernel
    unknown = set(overrides) - set(_OVERRIDE_KEYS)
    if unknown:
        raise bad_request(f"unknown training parameters: {sorted(unknown)}")
    try:
        params = TrainParams(
            delta=float(overrides.get("delta", base.delta)),
            max_passes=int(overrides.get("max_passes", base.max_passes)),
            update_variant=str(overrides.get("variant", base.update_variant)),
            epsilon=float(overrides.get("epsilon", base.epsilon)),
        )
        kern = KernelParams(alpha=float(overrides.get("alpha", kernel.alpha)))
    except (ClassifierError, TypeError, ValueError) as exc:
        raise bad_request(f"invalid training parameters: {exc}") from exc
    return params, kern


class ServiceCore:
    def __init__(
        self,
        config: ServiceConfig,
        *,
        store: DataStore | None = None,
        clock: Callable[[], float] = time.time,
    ):
        self.config = config
        self.store = store or DataStore(config.data_dir)
        self.clock = clock
        self._lock = threading.RLock()
        self._targets: dict[str, Target] = {}
        self._streams: dict[tuple[str, int], StreamState] = {}
        self._cursors: dict[tuple[str, int], StreamCursor] = {}
        self._subscribers: list[Subscriber] = []
        self._artifact: ModelArtifact | None = None
        self._model: PotentialModel | None = None
        self._model_id: str | None = None
        self._online_updates = 0
        self._training: dict = {"state": "idle", "report": None, "error": None}
        self._train_thread: threading.Thread | None = None
        self._scheduler: PollScheduler | None = None
        self._sched_thread: threading.Thread | None = None

        for target in config.targets:
            self._register_target(target)
        active = self.store.models.get_active()
        if active is not None:
            artifact = self.store.models.load(active)
            self._artifact, self._model, self._model_id = artifact, artifact.model, active

    # -- targets --

    def _register_target(self, target: Target) -> None:
        if target.id in self._targets:
            raise ServiceError("duplicate_target", f"target {target.id!r} already exists", 409)
        self._targets[target.id] = target
        for if_index in target.if_indexes:
            key = (target.id, if_index)
            self._streams[key] = StreamState(target_id=target.id, if_index=if_index)
            self._cursors[key] = StreamCursor()

    def add_target(self, doc: dict) -> Target:
        if not isinstance(doc, dict):
            raise bad_request("target must be a JSON object")
        allowed = {"id", "host", "port", "community", "if_indexes", "poll_interval_s"}
        unknown = set(doc) - allowed
        if unknown:
            raise bad_request(f"unknown target fields: {sorted(unknown)}")
        try:
            target = Target(
                id=doc.get("id", ""),
                host=doc.get("host", ""),
                port=doc.get("port", 161),
                community=doc.get("community", "public"),
                if_indexes=tuple(doc.get("if_indexes", (1,))),
                poll_interval_s=doc.get("poll_interval_s", 10),
            )
        except (TypeError, ValueError) as exc:
            raise bad_request(f"invalid target: {exc}") from exc
        with self._lock:
            self._register_target(target)
            if self._scheduler is not None:
                self._scheduler.add_target(target)
        return target

    def remove_target(self, target_id: str) -> None:
        with self._lock:
            if target_id not in self._targets:
                raise not_found(f"unknown target {target_id!r}")
            target = self._targets.pop(target_id)
            if self._scheduler is not None:
                self._scheduler.remove_target(target_id)
            for if_index in target.if_indexes:
                self._streams.pop((target_id, if_index), None)
                self._cursors.pop((target_id, if_index), None)

    def list_targets(self) -> list[dict]:
        with self._lock:
            return [
                {
                    "id": t.id,
                    "host": t.host,
                    "port": t.port,
                    "community": t.community,
                    "if_indexes": list(t.if_indexes),
                    "poll_interval_s": t.poll_interval_s,
                }
                for t in self._targets.values()
            ]

    # -- pipeline --

    def handle_poll_event(self, event: PollEvent) -> StateRecord | None:
        if event.error is not None:
            key = (event.target_id, event.if_index)
            with self._lock:
                stream = self._streams.get(key)
                if stream is None:
                    return None
                stream.health = HEALTH_UNREACHABLE
                doc = stream.to_doc()
            self._emit("state", doc)
            return None
        return self.process_snapshot(event.snapshot)

    def process_snapshot(self, snapshot: CounterSnapshot) -> StateRecord | None:
        """delta -> rates -> normalize -> classify -> persist + live state.

        Returns None when the snapshot yields no record: the first sample
        of a stream, a reboot re-base, or a degraded/unpairable snapshot
        (those update health only).
        """
        key = (snapshot.target_id, snapshot.if_index)
        with self._lock:
            stream = self._streams.get(key)
            if stream is None:  # stream outside configured targets (replay): track it
                stream = self._streams.setdefault(key, StreamState(snapshot.target_id, snapshot.if_index))
                self._cursors.setdefault(key, StreamCursor())
            stream.ts_ms = snapshot.timestamp_ms
            if snapshot.degraded:
                # partial counters would silently zero-fill features; keep
                # the last good snapshot as the pairing base instead
                stream.health = HEALTH_DEGRADED
                self._emit("state", stream.to_doc())
                return None
            stream.health = HEALTH_OK
            try:
                rates = self._cursors[key].feed(snapshot)
            except PipelineError as exc:
                log.warning("unpairable snapshot for %s/%s: %s", *key, exc)
                stream.health = HEALTH_DEGRADED
                self._emit("state", stream.to_doc())
                return None
            if rates is None:  # first sample or reboot: nothing to pair yet
                self._emit("state", stream.to_doc())
                return None

            stream.rates = dict(rates.values)
            artifact, model = self._artifact, self._model
            decision: StateDecision | None = None
            vector: FeatureVector | None = None
            strategy: str | None = None
            if artifact is not None:
                decided_at = snapshot.timestamp_ms / 1000.0
                try:
                    vector = self._vectorize(rates, artifact)
                    if self.config.online_reorg:
                        decisions, updated = recognize_online(model, [vector], decided_at=decided_at)
                        decision = decisions[0]
                        self._model = updated
                        if decision.label is not None:
                            self._online_updates += 1
                    else:
                        decision = classify(model, vector, decided_at=decided_at)
                    strategy = self.config.strategy_for(decision.label)
                except (ClassifierError, PipelineError) as exc:
                    # active model incompatible with this pipeline (e.g.
                    # imported with a foreign feature set): record raw
                    log.error("classification failed for %s/%s: %s", *key, exc)
                    decision, vector, strategy = None, None, None
            record = StateRecord(
                target_id=snapshot.target_id,
                if_index=snapshot.if_index,
                timestamp_ms=snapshot.timestamp_ms,
                rates=dict(rates.values),
                decision=decision,
                vector=vector,
                recommended_strategy=strategy,
                model_id=self._model_id if decision is not None else None,
                degraded=False,
            )
            record = self.store.history.append(record)
            stream.decision = decision
            stream.strategy = strategy
            stream.model_id = record.model_id
            state_doc = stream.to_doc()
        self._emit("state", state_doc)
        self._emit("record", record_to_doc(record))
        return record

    def _vectorize(self, rates: RateVector, artifact: ModelArtifact) -> FeatureVector:
        if artifact.norm is not None:
            return normalize(rates, artifact.norm)
        missing = [n for n in artifact.feature_order if n not in rates.values]
        if missing:
            raise PipelineError(f"rates missing features {missing}")
        return FeatureVector(tuple(rates.values[n] for n in artifact.feature_order))

    # -- labeling --

    def label_record(self, record_id: int, label_name: str) -> dict:
        cd = self.config.class_by_name(label_name)
        if cd is None:
            raise bad_request(f"unknown label {label_name!r}")
        try:
            record = self.store.history.get(record_id)
        except StoreError as exc:
            raise not_found(str(exc)) from exc
        features = {n: record.rates[n] for n in FEATURES_V1 if n in record.rates}
        try:
            key = self.store.labels.put(
                features, cd.label, source_id=str(record_id), allowed=self.config.labels
            )
        except StoreError as exc:
            raise bad_request(str(exc)) from exc
        return {
            "key": key,
            "record_id": record_id,
            "label": {"id": cd.label.id, "name": cd.label.name},
            "features": features,
        }

    # -- training --

    def training_status(self) -> dict:
        with self._lock:
            status = dict(self._training)
            status["active_model_id"] = self._model_id
            status["online_updates"] = self._online_updates
            return status

    def trigger_training(self, overrides: dict | None = None, *, wait: bool = False) -> dict:
        params, kernel = _merge_params(self.config.train, self.config.kernel, overrides)
        with self._lock:
            if self._training["state"] == "running":
                raise ServiceError("training_in_progress", "a training job is already running", 409)
            samples = self.store.labels.samples(FEATURES_V1)
            classes = {s.label.id for s in samples}
            if len(classes) < 2:
                raise ServiceError(
                    "insufficient_classes",
                    f"need labeled samples from >= 2 classes, have {len(classes)}",
                    409,
                )
            self._training = {
                "state": "running",
                "report": None,
                "error": None,
                "started_at": utc_now_iso(),
            }
            thread = threading.Thread(
                target=self._run_training_job, args=(samples, params, kernel), daemon=True
            )
            self._train_thread = thread
        self._emit("training", self.training_status())
        thread.start()
        if wait:
            thread.join()
        return self.training_status()

    def _run_training_job(
        self, samples: list[TrainingSample], params: TrainParams, kernel: KernelParams
    ) -> None:
        try:
            result = run_training(samples, params, kernel, memory_limit=self.config.memory_limit)
            model_id = self.store.models.save(result.artifact)
            self.store.models.set_active(model_id)
            report = dict(result.report, model_id=model_id)
            with self._lock:
                self._artifact = result.artifact
                self._model = result.artifact.model
                self._model_id = model_id
                self._online_updates = 0
                self._training = {
                    "state": "done",
                    "report": report,
                    "error": None,
                    "finished_at": utc_now_iso(),
                }
        except Exception as exc:  # report, never crash the service
            log.exception("training job failed")
            with self._lock:
                self._training = {
                    "state": "failed",
                    "report": None,
                    "error": str(exc),
                    "finished_at": utc_now_iso(),
                }
        self._emit("training", self.training_status())

    # -- models --

    def model_summary(self) -> dict | None:
        with self._lock:
            if self._artifact is None:
                return None
            a = self._artifact
            return {
                "model_id": self._model_id,
                "created_at": a.created_at,
                "fingerprint": a.fingerprint,
                "classes": [{"id": c.id, "name": c.name} for c in a.model.classes],
                "training_size": a.model.training_size,
                "epsilon": a.model.epsilon,
                "alpha": a.model.kernel.alpha,
                "stage1_converged": a.model.stage1_converged,
                "stage2_converged": a.model.stage2_converged,
                "online_updates": self._online_updates,
            }

    def list_models(self) -> list[dict]:
        with self._lock:
            active = self._model_id
        out = []
        for summary in self.store.models.list_summaries():
            summary["active"] = summary["model_id"] == active
            out.append(summary)
        return out

    def activate_model(self, model_id: str) -> dict:
        try:
            artifact = self.store.models.load(model_id)
        except StoreError as exc:
            raise not_found(str(exc)) from exc
        self.store.models.set_active(model_id)
        with self._lock:
            self._artifact, self._model, self._model_id = artifact, artifact.model, model_id
            self._online_updates = 0
        self._emit("training", self.training_status())
        return self.model_summary()

    # -- live state & events --

    def live_state(self) -> dict:
        with self._lock:
            streams = [s.to_doc() for s in self._streams.values()]
            model = self.model_summary()
        streams.sort(key=lambda d: (d["target"], d["if_index"]))
        return {"streams": streams, "model": model, "online_reorg": self.config.online_reorg}

    def history(self, **query) -> list[StateRecord]:
        return self.store.history.query(**query)

    def subscribe(self) -> Subscriber:
        sub = Subscriber()
        with self._lock:
            self._subscribers.append(sub)
        return sub

    def unsubscribe(self, sub: Subscriber) -> None:
        with self._lock:
            if sub in self._subscribers:
                self._subscribers.remove(sub)

    def _emit(self, event: str, doc: dict) -> None:
        with self._lock:
            subs = list(self._subscribers)
        for sub in subs:
            sub.offer(event, doc)

    # -- lifecycle --

    def start_polling(self) -> None:
        with self._lock:
            if self._scheduler is not None:
                return
            cfg = self.config

            def poll_fn(target: Target, if_index: int):
                return poll_once(
                    target, if_index, timeout_s=cfg.poll_timeout_s, retries=cfg.poll_retries
                )

            self._scheduler = PollScheduler(
                list(self._targets.values()), self.handle_poll_event, poll_fn=poll_fn
            )
            self._sched_thread = threading.Thread(
                target=self._scheduler.run, name="poll-scheduler", daemon=True
            )
            self._sched_thread.start()

    def stop(self) -> None:
        with self._lock:
            scheduler, thread = self._scheduler, self._sched_thread
            self._scheduler = self._sched_thread = None
        if scheduler is not None:
            scheduler.stop()
        if thread is not None:
            thread.join(timeout=5)
        train = self._train_thread
        if train is not None and train.is_alive():
            train.join(timeout=10)
        self.store.close()
