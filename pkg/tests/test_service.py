import threading

import pytest

from conftest import desk_config, desk_scenarios
from netstate import service as service_mod
from netstate.features import FEATURES_V1, CounterSnapshot
from netstate.service import ServiceCore, ServiceError, Subscriber
from netstate.snmp.scheduler import PollEvent
from netstate.synth import Scenario, generate_trace, trace_rates


def make_config(tmp_path, **kw):
    return desk_config(tmp_path / "data", **kw)


@pytest.fixture
def core(tmp_path):
    c = ServiceCore(make_config(tmp_path))
    yield c
    c.stop()


def feed_trace(core, scenario_kind, seed, *, duration=60, interval=5, target="sim", if_index=1):
    trace = generate_trace(
        Scenario(scenario_kind, duration, seed), interval, target_id=target, if_index=if_index
    )
    records = []
    for snap in (trace.base,) + trace.snapshots:
        record = core.process_snapshot(snap)
        if record is not None:
            records.append(record)
    return records


def seed_labels(core, duration=100, interval=5):
    """Bootstrap the label store straight from synthetic rates."""
    for scenario, label in desk_scenarios(duration):
        trace = generate_trace(scenario, interval)
        for i, rv in enumerate(trace_rates(trace)):
            features = {name: rv.values[name] for name in FEATURES_V1}
            core.store.labels.put(features, label, source_id=f"{scenario.kind}:{i}")


# -- pipeline --


def test_first_snapshot_produces_no_record(core):
    trace = generate_trace(Scenario("normal", 30, 1), 5)
    assert core.process_snapshot(trace.base) is None
    (stream,) = core.live_state()["streams"]
    assert stream["health"] == "ok"
    assert stream["decision"] is None
    assert core.store.history.count() == 0


def test_cold_start_records_raw_rates(core):
    records = feed_trace(core, "normal", 1)
    assert len(records) == 12
    r = records[0]
    assert r.decision is None and r.vector is None and r.model_id is None
    assert r.recommended_strategy is None
    assert r.rates["in_octets_rate"] > 0
    state = core.live_state()
    assert state["model"] is None
    (stream,) = state["streams"]
    assert stream["decision"] is None and stream["rates"] is not None


def test_degraded_snapshot_updates_health_only(core):
    trace = generate_trace(Scenario("normal", 30, 1), 5)
    core.process_snapshot(trace.base)
    bad = CounterSnapshot(
        target_id="sim", if_index=1, timestamp_ms=trace.base.timestamp_ms + 5000,
        uptime_ticks=trace.base.uptime_ticks + 500, counters={}, degraded=True,
    )
    assert core.process_snapshot(bad) is None
    (stream,) = core.live_state()["streams"]
    assert stream["health"] == "degraded"
    assert core.store.history.count() == 0
    # next good snapshot pairs with the last good one, not the degraded gap
    assert core.process_snapshot(trace.snapshots[0]) is not None


def test_poll_error_marks_unreachable(tmp_path):
    cfg = make_config(tmp_path)
    core = ServiceCore(cfg)
    core.add_target({"id": "sw1", "host": "127.0.0.1", "if_indexes": [1]})
    event = PollEvent(target_id="sw1", if_index=1, snapshot=None, error="timed out")
    assert core.handle_poll_event(event) is None
    (stream,) = core.live_state()["streams"]
    assert stream["health"] == "unreachable"
    core.stop()


def test_reboot_rebases_without_record(core):
    trace = generate_trace(Scenario("normal", 30, 1), 5)
    core.process_snapshot(trace.base)
    core.process_snapshot(trace.snapshots[0])
    rebooted = CounterSnapshot(
        target_id="sim", if_index=1,
        timestamp_ms=trace.snapshots[0].timestamp_ms + 5000,
        uptime_ticks=3, counters={name: 10 for name in trace.base.counters},
    )
    count_before = core.store.history.count()
    assert core.process_snapshot(rebooted) is None  # reset: re-base, health only
    assert core.store.history.count() == count_before
    (stream,) = core.live_state()["streams"]
    assert stream["health"] == "ok"
    after = CounterSnapshot(
        target_id="sim", if_index=1,
        timestamp_ms=rebooted.timestamp_ms + 5000,
        uptime_ticks=503, counters={name: 500 for name in trace.base.counters},
    )
    assert core.process_snapshot(after) is not None


# -- labeling --


def test_label_record_roundtrip(core):
    records = feed_trace(core, "congestion", 2)
    rid = records[0].record_id
    doc = core.label_record(rid, "Congestion")
    assert doc["record_id"] == rid
    assert doc["label"] == {"id": 1, "name": "Congestion"}
    assert set(doc["features"]) == set(FEATURES_V1)
    assert len(core.store.labels) == 1
    # idempotent repeat, replace on relabel
    core.label_record(rid, "Congestion")
    assert len(core.store.labels) == 1
    core.label_record(rid, "Normal")
    (sample,) = core.store.labels.samples(FEATURES_V1)
    assert sample.label.name == "Normal"


def test_label_errors(core):
    records = feed_trace(core, "normal", 3)
    with pytest.raises(ServiceError) as exc:
        core.label_record(records[0].record_id, "Lobster")
    assert exc.value.code == "bad_request"
    with pytest.raises(ServiceError) as exc:
        core.label_record(999_999, "Normal")
    assert exc.value.status == 404


# -- training --


def test_training_insufficient_classes(core):
    records = feed_trace(core, "normal", 4)
    core.label_record(records[0].record_id, "Normal")
    with pytest.raises(ServiceError) as exc:
        core.trigger_training()
    assert exc.value.code == "insufficient_classes"
    assert exc.value.status == 409


def test_training_end_to_end(core):
    seed_labels(core)
    status = core.trigger_training(wait=True)
    assert status["state"] == "done"
    report = status["report"]
    assert report["converged"] is True
    assert report["training_accuracy"] == 1.0
    assert report["sample_count"] == 80
    assert report["class_counts"]["BroadcastStorm"] == 20
    model_id = report["model_id"]
    assert core.store.models.get_active() == model_id
    assert core.model_summary()["model_id"] == model_id

    # classified snapshots now carry labels and strategies from config
    records = feed_trace(core, "congestion", 9, target="live")
    names = [r.decision.label.name for r in records if r.decision and r.decision.label]
    assert names and all(n == "Congestion" for n in names)
    assert records[-1].recommended_strategy == "shape or reroute bulk traffic"
    assert records[-1].model_id == model_id


def test_training_single_flight(core, monkeypatch):
    seed_labels(core, duration=50)
    gate = threading.Event()
    real = service_mod.run_training

    def slow_training(*args, **kw):
        gate.wait(timeout=10)
        return real(*args, **kw)

    monkeypatch.setattr(service_mod, "run_training", slow_training)
    core.trigger_training()
    with pytest.raises(ServiceError) as exc:
        core.trigger_training()
    assert exc.value.code == "training_in_progress"
    gate.set()
    core._train_thread.join(timeout=10)
    assert core.training_status()["state"] == "done"


def test_training_override_validation(core):
    seed_labels(core, duration=50)
    with pytest.raises(ServiceError, match="unknown training parameters"):
        core.trigger_training({"learning_rate": 3})
    with pytest.raises(ServiceError, match="invalid training parameters"):
        core.trigger_training({"variant": "z"})
    status = core.trigger_training({"epsilon": 0.001, "alpha": 2.0}, wait=True)
    assert status["report"]["params"]["alpha"] == 2.0


def test_activate_previous_model(core):
    seed_labels(core, duration=50)
    first = core.trigger_training(wait=True)["report"]["model_id"]
    second = core.trigger_training({"alpha": 3.0}, wait=True)["report"]["model_id"]
    assert first != second
    assert core.model_summary()["model_id"] == second
    core.activate_model(first)
    assert core.model_summary()["model_id"] == first
    assert core.store.models.get_active() == first
    models = core.list_models()
    assert {m["model_id"] for m in models} == {first, second}
    assert [m["model_id"] for m in models if m["active"]] == [first]
    with pytest.raises(ServiceError) as exc:
        core.activate_model("abcdef123456")
    assert exc.value.status == 404


def test_model_survives_restart(tmp_path):
    cfg = make_config(tmp_path)
    core = ServiceCore(cfg)
    seed_labels(core, duration=50)
    model_id = core.trigger_training(wait=True)["report"]["model_id"]
    core.stop()

    reborn = ServiceCore(make_config(tmp_path))
    assert reborn.model_summary()["model_id"] == model_id
    records = feed_trace(reborn, "broadcast-storm", 7)
    assert records[-1].decision.label.name == "BroadcastStorm"
    reborn.stop()


def test_online_reorg_adopts_identified_vectors(tmp_path):
    core = ServiceCore(make_config(tmp_path, online_reorg=True))
    seed_labels(core, duration=50)
    core.trigger_training(wait=True)
    assert core.training_status()["online_updates"] == 0
    feed_trace(core, "normal", 11)
    adopted = core.training_status()["online_updates"]
    assert adopted > 0
    state = core.live_state()
    assert state["online_reorg"] is True
    core.stop()


# -- events --


def test_subscribers_see_state_record_training(core):
    sub = core.subscribe()
    feed_trace(core, "normal", 1, duration=20)
    seed_labels(core, duration=50)
    core.trigger_training(wait=True)
    events = []
    while True:
        item = sub.get(timeout=0.05)
        if item is None:
            break
        events.append(item)
    kinds = [e[0] for e in events]
    assert "state" in kinds and "record" in kinds and "training" in kinds
    first_record = next(doc for kind, doc in events if kind == "record")
    assert first_record["record_id"] == 1
    assert first_record["rates"]["in_octets_rate"] > 0
    done = [doc for kind, doc in events if kind == "training" and doc["state"] == "done"]
    assert done and done[-1]["report"]["converged"] is True
    core.unsubscribe(sub)


def test_slow_subscriber_drops_oldest_never_blocks():
    sub = Subscriber(limit=4)
    for i in range(10):
        sub.offer("state", {"n": i})
    assert sub.dropped == 6
    got = [sub.get(timeout=0.01)[1]["n"] for _ in range(4)]
    assert got == [6, 7, 8, 9]
    assert sub.get(timeout=0.01) is None


# -- targets --


def test_target_crud(core):
    core.add_target({"id": "sw1", "host": "192.0.2.1", "if_indexes": [1, 2], "poll_interval_s": 5})
    assert [t["id"] for t in core.list_targets()] == ["sw1"]
    keys = {(s["target"], s["if_index"]) for s in core.live_state()["streams"]}
    assert keys == {("sw1", 1), ("sw1", 2)}
    with pytest.raises(ServiceError) as exc:
        core.add_target({"id": "sw1", "host": "192.0.2.9"})
    assert exc.value.code == "duplicate_target"
    with pytest.raises(ServiceError, match="unknown target fields"):
        core.add_target({"id": "x", "host": "h", "snmp_version": 3})
    with pytest.raises(ServiceError, match="invalid target"):
        core.add_target({"id": "x", "host": "h", "poll_interval_s": 0})
    core.remove_target("sw1")
    assert core.list_targets() == []
    assert core.live_state()["streams"] == []
    with pytest.raises(ServiceError) as exc:
        core.remove_target("sw1")
    assert exc.value.status == 404


def test_unknown_stream_autoregisters(core):
    feed_trace(core, "normal", 1, target="adhoc", if_index=9)
    keys = {(s["target"], s["if_index"]) for s in core.live_state()["streams"]}
    assert ("adhoc", 9) in keys
