"""HTTP front end: JSON REST under /api/v1, server-sent events at
/stream, and static dashboard files under /ui.

Built on ThreadingHTTPServer: one thread per request, which suits the
workload (few operators, long-lived SSE connections). All handlers go
through ServiceCore; nothing here touches stores or models directly.
"""

from __future__ import annotations

import json
import logging
import mimetypes
import re
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlsplit

from netstate.config import ServiceConfig
from netstate.service import ServiceCore, ServiceError, bad_request, not_found
from netstate.store import record_to_doc

log = logging.getLogger("netstate.http")

MAX_BODY_BYTES = 1 << 20
DEFAULT_PAGE_LIMIT = 100
MAX_PAGE_LIMIT = 1000


def _int_param(params: dict, name: str, default=None):
    raw = params.get(name)
    if raw is None:
        return default
    try:
        return int(raw[0])
    except (TypeError, ValueError):
        raise bad_request(f"query parameter {name!r} must be an integer") from None


def _str_param(params: dict, name: str) -> str | None:
    raw = params.get(name)
    return raw[0] if raw else None


# -- route handlers: (core, match, params, body) -> (status, doc) --


def _get_targets(core, match, params, body):
    return 200, {"targets": core.list_targets()}


def _post_targets(core, match, params, body):
    target = core.add_target(body)
    return 201, {
        "id": target.id,
        "host": target.host,
        "port": target.port,
        "community": target.community,
        "if_indexes": list(target.if_indexes),
        "poll_interval_s": target.poll_interval_s,
    }


def _delete_target(core, match, params, body):
    core.remove_target(match.group("id"))
    return 204, None


def _get_state(core, match, params, body):
    return 200, core.live_state()


def _get_history(core, match, params, body):
    limit = _int_param(params, "limit", DEFAULT_PAGE_LIMIT)
    offset = _int_param(params, "offset", 0)
    if limit is None or not 0 <= limit <= MAX_PAGE_LIMIT:
        raise bad_request(f"limit must be in [0, {MAX_PAGE_LIMIT}]")
    if offset < 0:
        raise bad_request("offset must be >= 0")
    records = core.history(
        target_id=_str_param(params, "target"),
        if_index=_int_param(params, "if_index"),
        ts_from=_int_param(params, "from"),
        ts_to=_int_param(params, "to"),
        label=_str_param(params, "label"),
    )
    page = records[offset : offset + limit]
    return 200, {
        "records": [record_to_doc(r) for r in page],
        "total": len(records),
        "offset": offset,
        "limit": limit,
    }


def _post_label(core, match, params, body):
    if not isinstance(body, dict) or not isinstance(body.get("label"), str):
        raise bad_request('body must be {"label": "<class name>"}')
    try:
        record_id = int(match.group("id"))
    except ValueError:
        raise not_found(f"unknown record {match.group('id')!r}") from None
    return 200, core.label_record(record_id, body["label"])


def _get_labels(core, match, params, body):
    samples = [
        {
            "key": entry["key"],
            "features": entry["features"],
            "label": entry["label"],
            "source_id": entry["source_id"],
        }
        for entry in core.store.labels.entries()
    ]
    return 200, {"samples": samples, "class_counts": core.store.labels.class_counts()}


def _post_train(core, match, params, body):
    if body is not None and not isinstance(body, dict):
        raise bad_request("body must be a JSON object of parameter overrides")
    return 202, core.trigger_training(body)


def _get_train_status(core, match, params, body):
    return 200, core.training_status()


def _get_model(core, match, params, body):
    return 200, {"model": core.model_summary()}


def _get_models(core, match, params, body):
    return 200, {"models": core.list_models()}


def _post_activate(core, match, params, body):
    return 200, core.activate_model(match.group("id"))


def _get_config(core, match, params, body):
    cfg: ServiceConfig = core.config
    return 200, {
        "classes": [
            {"id": c.label.id, "name": c.label.name, "color": c.color, "strategy": c.strategy}
            for c in cfg.classes
        ],
        "unidentified_strategy": cfg.unidentified_strategy,
        "online_reorg": cfg.online_reorg,
        "training": {
            "delta": cfg.train.delta,
            "alpha": cfg.kernel.alpha,
            "epsilon": cfg.train.epsilon,
            "max_passes": cfg.train.max_passes,
            "variant": cfg.train.update_variant,
        },
    }


ROUTES = (
    ("GET", re.compile(r"^/api/v1/targets$"), _get_targets),
    ("POST", re.compile(r"^/api/v1/targets$"), _post_targets),
    ("DELETE", re.compile(r"^/api/v1/targets/(?P<id>[^/]+)$"), _delete_target),
    ("GET", re.compile(r"^/api/v1/state$"), _get_state),
    ("GET", re.compile(r"^/api/v1/history$"), _get_history),
    ("POST", re.compile(r"^/api/v1/records/(?P<id>[^/]+)/label$"), _post_label),
    ("GET", re.compile(r"^/api/v1/labels$"), _get_labels),
    ("POST", re.compile(r"^/api/v1/train$"), _post_train),
    ("GET", re.compile(r"^/api/v1/train/status$"), _get_train_status),
    ("GET", re.compile(r"^/api/v1/model$"), _get_model),
    ("GET", re.compile(r"^/api/v1/models$"), _get_models),
    ("POST", re.compile(r"^/api/v1/models/(?P<id>[^/]+)/activate$"), _post_activate),
    ("GET", re.compile(r"^/api/v1/config$"), _get_config),
)


class ApiHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server: "ApiServer"

    # -- plumbing --

    def log_message(self, fmt, *args):  # route through logging, not stderr
        log.debug("%s %s", self.address_string(), fmt % args)

    def _send_json(self, status: int, doc) -> None:
        body = b"" if doc is None else json.dumps(doc).encode()
        self.send_response(status)
        if body:
            self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        if body:
            self.wfile.write(body)

    def _send_error_doc(self, exc: ServiceError) -> None:
        self._send_json(exc.status, {"code": exc.code, "message": exc.message})

    def _read_body(self):
        length = int(self.headers.get("Content-Length") or 0)
        if length > MAX_BODY_BYTES:
            raise ServiceError("bad_request", "request body too large", 413)
        if length == 0:
            return None
        raw = self.rfile.read(length)
        try:
            return json.loads(raw)
        except json.JSONDecodeError as exc:
            raise bad_request(f"invalid JSON body: {exc}") from exc

    def _check_auth(self, params: dict) -> None:
        token = self.server.core.config.api_token
        if token is None:
            return
        header = self.headers.get("Authorization") or ""
        if header == f"Bearer {token}":
            return
        if _str_param(params, "token") == token:
            return
        raise ServiceError("unauthorized", "missing or invalid API token", 401)

    # -- dispatch --

    def do_GET(self):
        self._dispatch("GET")

    def do_POST(self):
        self._dispatch("POST")

    def do_DELETE(self):
        self._dispatch("DELETE")

    def _dispatch(self, method: str) -> None:
        split = urlsplit(self.path)
        path = split.path
        params = parse_qs(split.query)
        try:
            if path == "/stream":
                self._check_auth(params)
                self._serve_stream()
                return
            if path == "/" or path == "/ui":
                self.send_response(302)
                self.send_header("Location", "/ui/")
                self.send_header("Content-Length", "0")
                self.end_headers()
                return
            if path.startswith("/ui/"):
                if method != "GET":
                    raise ServiceError("method_not_allowed", "static files are GET-only", 405)
                self._serve_static(path[len("/ui/") :])
                return
            self._check_auth(params)
            body = self._read_body() if method in ("POST", "PUT") else None
            path_matched = False
            for route_method, pattern, handler in ROUTES:
                match = pattern.match(path)
                if match is None:
                    continue
                path_matched = True
                if route_method != method:
                    continue
                status, doc = handler(self.server.core, match, params, body)
                self._send_json(status, doc)
                return
            if path_matched:
                raise ServiceError("method_not_allowed", f"{method} not supported here", 405)
            raise not_found(f"no such endpoint: {path}")
        except ServiceError as exc:
            self._send_error_doc(exc)
        except (BrokenPipeError, ConnectionResetError):
            pass
        except Exception:
            log.exception("unhandled error serving %s %s", method, path)
            try:
                self._send_json(500, {"code": "internal", "message": "internal server error"})
            except OSError:
                pass

    # -- server-sent events --

    def _write_event(self, event: str, doc) -> None:
        payload = json.dumps(doc)
        self.wfile.write(f"event: {event}\ndata: {payload}\n\n".encode())
        self.wfile.flush()

    def _serve_stream(self) -> None:
        core = self.server.core
        sub = core.subscribe()
        try:
            self.send_response(200)
            self.send_header("Content-Type", "text/event-stream")
            self.send_header("Cache-Control", "no-cache")
            self.send_header("Connection", "close")
            self.end_headers()
            self.wfile.write(b"retry: 3000\n\n")
            # initial snapshot so a subscriber misses nothing between its
            # GET /state and the first live event
            state = core.live_state()
            for stream_doc in state["streams"]:
                self._write_event("state", stream_doc)
            self._write_event("training", core.training_status())
            while True:
                item = sub.get(timeout=self.server.keepalive_s)
                if item is None:
                    self.wfile.write(b": keepalive\n\n")
                    self.wfile.flush()
                    continue
                self._write_event(item[0], item[1])
        except (BrokenPipeError, ConnectionResetError, TimeoutError):
            pass
        finally:
            core.unsubscribe(sub)

    # -- static dashboard --

    def _serve_static(self, rel: str) -> None:
        ui_dir = self.server.core.config.ui_dir
        if ui_dir is None or not ui_dir.is_dir():
            raise not_found("no dashboard build configured (service ui_dir)")
        root = ui_dir.resolve()
        target = (root / (rel or "index.html")).resolve()
        if target != root and root not in target.parents:
            raise not_found("not found")
        if not target.is_file():
            # single-page app: unknown paths fall back to the shell
            target = root / "index.html"
            if not target.is_file():
                raise not_found("not found")
        data = target.read_bytes()
        ctype = mimetypes.guess_type(str(target))[0] or "application/octet-stream"
        self.send_response(200)
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)


class ApiServer(ThreadingHTTPServer):
    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, address: tuple[str, int], core: ServiceCore, *, keepalive_s: float = 15.0):
        self.core = core
        self.keepalive_s = keepalive_s
        super().__init__(address, ApiHandler)


def serve(config: ServiceConfig, *, core: ServiceCore | None = None) -> None:
    """Run the daemon until interrupted: poll scheduler + HTTP API."""
    core = core or ServiceCore(config)
    server = ApiServer(config.listen, core)
    core.start_polling()
    host, port = server.server_address[:2]
    log.info("listening on http://%s:%s (data: %s)", host, port, config.data_dir)
    try:
        server.serve_forever()
    finally:
        server.server_close()
        core.stop()
