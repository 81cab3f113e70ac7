"""Run configuration: INI file, environment variables, CLI flag overrides.

Precedence is flags > environment > file > built-in defaults. The file is
a single flat key=value document under an ``[omprag]`` section so a run
can be reproduced from one recorded config.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field, fields
from pathlib import Path

from .errors import InvalidInputError

ENV_PREFIX = "OMPRAG_"

PROFILE_RAG = "rag"
PROFILE_BASELINE = "baseline"
PROFILES = (PROFILE_RAG, PROFILE_BASELINE)


@dataclass
class PipelineConfig:
    profile: str = PROFILE_RAG
    k: int = 4
    model: str = "gpt-3.5-turbo"
    temperature: float = 0.2
    thread_sweep: tuple[int, ...] = (1, 2, 4, 8)
    differential_threads: tuple[int, ...] = (1, 8)
    repetitions: int = 3
    workers: int = 4
    compile_cmd: str = "g++ -fopenmp -std=c++17 -O2 {src} -o {bin}"
    compile_timeout: float = 60.0
    run_timeout: float = 120.0
    chat_endpoint: str = ""
    chat_api_key: str = ""
    embed_endpoint: str = ""
    embed_model: str = ""
    embed_api_key: str = ""
    replay_dir: str = ""
    record_dir: str = ""
    template_path: str = ""
    out_dir: str = "out"

    def validate(self) -> None:
        if self.profile not in PROFILES:
            raise InvalidInputError(f"profile must be one of {PROFILES}, got {self.profile!r}")
        if self.k < 1:
            raise InvalidInputError("k must be >= 1")
        if self.temperature < 0:
            raise InvalidInputError("temperature must be >= 0")
        if not self.thread_sweep or any(t < 1 for t in self.thread_sweep):
            raise InvalidInputError("thread_sweep must contain positive thread counts")


def _parse_value(name: str, raw: str):
    if name in ("thread_sweep", "differential_threads"):
        try:
            return tuple(int(part) for part in raw.replace(" ", "").split(",") if part)
        except ValueError as exc:
            raise InvalidInputError(f"bad thread list for {name}: {raw!r}") from exc
    if name in ("k", "repetitions", "workers"):
        return int(raw)
    if name in ("temperature", "compile_timeout", "run_timeout"):
        return float(raw)
    return raw


def load_config(
    path: Path | str | None = None,
    overrides: dict | None = None,
    env: dict | None = None,
) -> PipelineConfig:
    env = os.environ if env is None else env
    cfg = PipelineConfig()
    names = [f.name for f in fields(PipelineConfig)]

    if path is not None:
        parser = configparser.ConfigParser()
        read = parser.read(Path(path))
        if not read:
            raise InvalidInputError(f"config file {path} not found")
        section = parser["omprag"] if parser.has_section("omprag") else parser["DEFAULT"]
        for name in names:
            if name in section:
                setattr(cfg, name, _parse_value(name, section[name]))

    for name in names:
        env_key = ENV_PREFIX + name.upper()
        if env_key in env:
            setattr(cfg, name, _parse_value(name, env[env_key]))

    for name, value in (overrides or {}).items():
        if value is None:
            continue
        if name not in names:
            raise InvalidInputError(f"unknown config key {name!r}")
        setattr(cfg, name, _parse_value(name, value) if isinstance(value, str) else value)

    cfg.validate()
    return cfg
