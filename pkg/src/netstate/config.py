"""Service configuration: one INI file, loaded at startup.

Sections:

  [service]      listen, data_dir, api_token, online_reorg, ui_dir,
                 poll_timeout_s, poll_retries
  [training]     delta, alpha, epsilon, max_passes, variant, memory_limit
  [class:NAME]   id (required), color, strategy (required)
  [unidentified] strategy
  [target:ID]    host (required), port, community, if_indexes,
                 poll_interval_s

Environment overrides (applied after the file): NSS_LISTEN, NSS_DATA_DIR.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field
from pathlib import Path

from netstate.classifier import (
    DEFAULT_MEMORY_LIMIT,
    ClassLabel,
    ClassifierError,
    KernelParams,
    TrainParams,
)
from netstate.snmp.client import DEFAULT_RETRIES, DEFAULT_TIMEOUT_S, Target

DEFAULT_LISTEN = ("127.0.0.1", 8750)
UNIDENTIFIED_STRATEGY = "investigate"

# fallback tile colors when a class does not configure one
_PALETTE = ("#2e7d32", "#ef6c00", "#c62828", "#6a1b9a", "#1565c0", "#00838f", "#9e9d24")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ClassDef:
    label: ClassLabel
    color: str
    strategy: str


@dataclass(frozen=True)
class ServiceConfig:
    listen: tuple[str, int] = DEFAULT_LISTEN
    data_dir: Path = Path("./data")
    api_token: str | None = None
    online_reorg: bool = False
    ui_dir: Path | None = None
    poll_timeout_s: float = DEFAULT_TIMEOUT_S
    poll_retries: int = DEFAULT_RETRIES
    train: TrainParams = field(default_factory=TrainParams)
    kernel: KernelParams = field(default_factory=KernelParams)
    memory_limit: int = DEFAULT_MEMORY_LIMIT
    classes: tuple[ClassDef, ...] = ()
    unidentified_strategy: str = UNIDENTIFIED_STRATEGY
    targets: tuple[Target, ...] = ()

    def __post_init__(self):
        if len(self.classes) < 2:
            raise ConfigError(f"need at least 2 classes, got {len(self.classes)}")
        ids = [c.label.id for c in self.classes]
        names = [c.label.name for c in self.classes]
        if len(set(ids)) != len(ids):
            raise ConfigError(f"duplicate class ids: {sorted(ids)}")
        if len(set(names)) != len(names):
            raise ConfigError(f"duplicate class names: {sorted(names)}")
        if any(not c.strategy.strip() for c in self.classes):
            raise ConfigError("every class needs a recommended strategy")
        if not self.unidentified_strategy.strip():
            raise ConfigError("unidentified strategy must be non-empty")
        tids = [t.id for t in self.targets]
        if len(set(tids)) != len(tids):
            raise ConfigError(f"duplicate target ids: {sorted(tids)}")

    @property
    def labels(self) -> tuple[ClassLabel, ...]:
        return tuple(c.label for c in self.classes)

    def strategy_for(self, label: ClassLabel | None) -> str:
        if label is None:
            return self.unidentified_strategy
        for c in self.classes:
            if c.label == label:
                return c.strategy
        return self.unidentified_strategy

    def class_by_name(self, name: str) -> ClassDef | None:
        for c in self.classes:
            if c.label.name == name:
                return c
        return None


def parse_listen(value: str) -> tuple[str, int]:
    host, sep, port = value.strip().rpartition(":")
    if not sep or not host:
        raise ConfigError(f"listen must be host:port, got {value!r}")
    try:
        port_num = int(port)
    except ValueError:
        raise ConfigError(f"listen port must be an integer, got {port!r}") from None
    if not 0 <= port_num <= 65535:  # 0 = let the OS pick
        raise ConfigError(f"listen port out of range: {port_num}")
    return host, port_num


def _getters(cp: configparser.ConfigParser, section: str):
    def get(key, default=None):
        return cp.get(section, key, fallback=default)

    def getint(key, default):
        try:
            return cp.getint(section, key, fallback=default)
        except ValueError as exc:
            raise ConfigError(f"[{section}] {key}: {exc}") from None

    def getfloat(key, default):
        try:
            return cp.getfloat(section, key, fallback=default)
        except ValueError:
            raise ConfigError(f"[{section}] {key} must be a number") from None

    def getbool(key, default):
        try:
            return cp.getboolean(section, key, fallback=default)
        except ValueError:
            raise ConfigError(f"[{section}] {key} must be true/false") from None

    return get, getint, getfloat, getbool


def _parse_if_indexes(raw: str, section: str) -> tuple[int, ...]:
    try:
        indexes = tuple(int(p) for p in raw.replace(",", " ").split())
    except ValueError:
        raise ConfigError(f"[{section}] if_indexes must be integers, got {raw!r}") from None
    if not indexes:
        raise ConfigError(f"[{section}] if_indexes must name at least one interface")
    return indexes


def load_config(path: str | Path) -> ServiceConfig:
    path = Path(path)
    # ';' only: '#' as an inline prefix would truncate hex color values
    cp = configparser.ConfigParser(inline_comment_prefixes=(";",))
    try:
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc

    get, getint, getfloat, getbool = _getters(cp, "service")
    listen = parse_listen(os.environ.get("NSS_LISTEN") or get("listen", "127.0.0.1:8750"))
    data_dir = Path(os.environ.get("NSS_DATA_DIR") or get("data_dir", "./data"))
    api_token = (get("api_token") or "").strip() or None
    ui_raw = (get("ui_dir") or "").strip()

    tget, tgetint, tgetfloat, _ = _getters(cp, "training")
    variant = tget("variant", "a").strip().lower()
    try:
        train = TrainParams(
            delta=tgetfloat("delta", 1.0),
            max_passes=tgetint("max_passes", 20),
            update_variant=variant,
            epsilon=tgetfloat("epsilon", 0.0),
        )
        kernel = KernelParams(alpha=tgetfloat("alpha", 1.0))
    except ClassifierError as exc:
        raise ConfigError(f"[training] {exc}") from exc
    memory_limit = tgetint("memory_limit", DEFAULT_MEMORY_LIMIT)
    if memory_limit < 1:
        raise ConfigError(f"[training] memory_limit must be >= 1, got {memory_limit}")

    classes = []
    targets = []
    for section in cp.sections():
        if section.startswith("class:"):
            name = section[len("class:") :].strip()
            if not name:
                raise ConfigError("class section needs a name: [class:NAME]")
            cget, cgetint, _, _ = _getters(cp, section)
            if cp.get(section, "id", fallback=None) is None:
                raise ConfigError(f"[{section}] is missing the required 'id'")
            class_id = cgetint("id", 0)
            strategy = (cget("strategy") or "").strip()
            if not strategy:
                raise ConfigError(f"[{section}] is missing the required 'strategy'")
            try:
                label = ClassLabel(id=class_id, name=name)
            except ClassifierError as exc:
                raise ConfigError(f"[{section}] {exc}") from exc
            color = (cget("color") or "").strip() or _PALETTE[class_id % len(_PALETTE)]
            classes.append(ClassDef(label=label, color=color, strategy=strategy))
        elif section.startswith("target:"):
            target_id = section[len("target:") :].strip()
            tgt_get, tgt_getint, tgt_getfloat, _ = _getters(cp, section)
            host = (tgt_get("host") or "").strip()
            if not host:
                raise ConfigError(f"[{section}] is missing the required 'host'")
            try:
                targets.append(
                    Target(
                        id=target_id,
                        host=host,
                        port=tgt_getint("port", 161),
                        community=tgt_get("community", "public"),
                        if_indexes=_parse_if_indexes(tgt_get("if_indexes", "1"), section),
                        poll_interval_s=tgt_getfloat("poll_interval_s", 10.0),
                    )
                )
            except ValueError as exc:
                raise ConfigError(f"[{section}] {exc}") from exc
        elif section not in ("service", "training", "unidentified"):
            raise ConfigError(f"unknown config section [{section}]")

    classes.sort(key=lambda c: c.label.id)
    uget, _, _, _ = _getters(cp, "unidentified")
    unidentified = (uget("strategy") or UNIDENTIFIED_STRATEGY).strip()

    try:
        return ServiceConfig(
            listen=listen,
            data_dir=data_dir,
            api_token=api_token,
            online_reorg=getbool("online_reorg", False),
            ui_dir=Path(ui_raw) if ui_raw else None,
            poll_timeout_s=getfloat("poll_timeout_s", DEFAULT_TIMEOUT_S),
            poll_retries=getint("poll_retries", DEFAULT_RETRIES),
            train=train,
            kernel=kernel,
            memory_limit=memory_limit,
            classes=tuple(classes),
            unidentified_strategy=unidentified,
            targets=tuple(targets),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
