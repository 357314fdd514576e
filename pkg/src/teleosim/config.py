"""Server configuration: a strict "key value" line format.

Unknown keys are rejected by name so typos fail loudly at startup.
`scene` and `robot` keys repeat, one path each; relative paths resolve
against the config file's directory. When no robot/scene paths are given,
the bundled desk-scale fixtures are registered.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .ik import IkParams
from .session import GraspParams


class ConfigError(ValueError):
    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key


@dataclass
class ServerConfig:
    host: str = "127.0.0.1"
    stream_port: int = 7447
    http_port: int = 8447
    max_sessions: int = 64
    default_scene: str = "sort_bolts"
    store_dir: Path = Path("teleosim_store")
    max_store_bytes: int | None = None
    session_user: str = "operator"
    tracking_mode: str = "inline"
    reconnect_window: float = 30.0
    ui_dir: Path | None = None
    robot_paths: list[Path] = field(default_factory=list)
    scene_paths: list[Path] = field(default_factory=list)
    ik: IkParams = field(default_factory=IkParams)
    grasp: GraspParams = field(default_factory=GraspParams)

    def resolve_store_dir(self) -> Path:
        env = os.environ.get("TELEOP_STORE_DIR")
        return Path(env) if env else self.store_dir


_INT_KEYS = {"stream_port", "http_port", "max_sessions", "max_store_bytes"}
_FLOAT_KEYS = {"reconnect_window"}
_STR_KEYS = {"host", "default_scene", "session_user", "tracking_mode"}
_PATH_KEYS = {"store_dir", "ui_dir"}
_IK_KEYS = {"ik_alpha": "alpha", "ik_damping": "damping", "ik_dt": "dt",
            "ik_d_margin": "d_margin", "ik_limit_horizon": "limit_horizon",
            "ik_qp_max_iter": "qp_max_iter", "ik_qp_tol": "qp_tol"}
_GRASP_KEYS = {"grasp_reach": "reach", "grasp_attach_below": "attach_below",
               "grasp_release_above": "release_above",
               "grasp_descent_speed": "descent_speed"}


def parse_config(text: str, base_dir: Path | None = None) -> ServerConfig:
    cfg = ServerConfig()
    base = base_dir or Path(".")
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition(" ")
        value = value.strip()
        if not value:
            raise ConfigError(f"line {lineno}: key '{key}' has no value", key)
        try:
            if key in _INT_KEYS:
                setattr(cfg, key, int(value))
            elif key in _FLOAT_KEYS:
                setattr(cfg, key, float(value))
            elif key in _STR_KEYS:
                setattr(cfg, key, value)
            elif key in _PATH_KEYS:
                setattr(cfg, key, (base / value).resolve())
            elif key == "robot":
                cfg.robot_paths.append((base / value).resolve())
            elif key == "scene":
                cfg.scene_paths.append((base / value).resolve())
            elif key in _IK_KEYS:
                attr = _IK_KEYS[key]
                cast = int if attr == "qp_max_iter" else float
                setattr(cfg.ik, attr, cast(value))
            elif key in _GRASP_KEYS:
                setattr(cfg.grasp, _GRASP_KEYS[key], float(value))
            else:
                raise ConfigError(f"line {lineno}: unknown key '{key}'", key)
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"line {lineno}: bad value for '{key}': {value}",
                              key) from exc
    if cfg.tracking_mode not in ("inline", "digest"):
        raise ConfigError(f"tracking_mode '{cfg.tracking_mode}'", "tracking_mode")
    cfg.ik.validate()
    return cfg


def load_config(path: Path) -> ServerConfig:
    path = Path(path)
    return parse_config(path.read_text(), path.parent)


def bundled_asset_text(name: str) -> str:
    return resources.files("teleosim").joinpath(f"assets/{name}").read_text()


def bundled_robot_names() -> list[str]:
    return ["planar1", "planar2", "dualarm7"]


def bundled_scene_names() -> list[str]:
    return ["sort_bolts", "mug_basket"]
