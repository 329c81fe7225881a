"""Persistent store of brute-force reference values with provenance.

Records are write-once: a key, once stored, is never overwritten.  Exact rationals are
stored as strings ("3/8") so they survive JSON round trips.
"""

from __future__ import annotations

import datetime as _dt
import json
import os
import shlex
import sys
from fractions import Fraction
from pathlib import Path
from typing import Mapping

DEFAULT_STORE = Path(__file__).with_name("data") / "oracles.json"
STORE_VERSION = 1


class ConfigInvalid(ValueError):
    pass


class KeyExists(KeyError):
    pass


def make_key(scenario: str, params: Mapping) -> str:
    """Canonical key: scenario name plus the sorted parameters."""
    parts = []
    for k in sorted(params):
        v = params[k]
        if isinstance(v, (list, tuple)):
            v = ",".join(str(x) for x in v)
        parts.append(f"{k}={v}")
    return f"{scenario}/" + ";".join(parts)


def encode(x):
    if isinstance(x, Fraction):
        return str(x)
    if isinstance(x, (list, tuple)):
        return [encode(y) for y in x]
    if isinstance(x, dict):
        return {str(k): encode(v) for k, v in x.items()}
    return x


def decode_fraction(s) -> Fraction:
    return Fraction(s)


class OracleStore:
    def __init__(self, path: str | os.PathLike | None = None):
        self.path = Path(path) if path is not None else DEFAULT_STORE
        self._records = self._load()

    def _load(self) -> dict:
        if not self.path.exists():
            return {}
        try:
            data = json.loads(self.path.read_text())
        except json.JSONDecodeError as e:
            raise ConfigInvalid(f"oracle store {self.path} is not valid JSON: {e}") from e
        if data.get("version") != STORE_VERSION:
            raise ConfigInvalid(f"oracle store version {data.get('version')!r} is not {STORE_VERSION}")
        return dict(data.get("records", {}))

    def __contains__(self, key: str) -> bool:
        return key in self._records

    def keys(self) -> list:
        return sorted(self._records)

    def get(self, key: str) -> dict:
        if key not in self._records:
            raise ConfigInvalid(f"oracle key {key!r} not found in {self.path}")
        return self._records[key]

    def record(self, key: str, values, params: Mapping | None = None, command: str | None = None,
               date: str | None = None, **extra) -> dict:
        """Persist a new record; KeyExists if the key is taken, ConfigInvalid if values are empty."""
        if key in self._records:
            raise KeyExists(key)
        if values is None or (hasattr(values, "__len__") and len(values) == 0):
            raise ConfigInvalid("refusing to record an empty value list")
        rec = {
            "values": encode(values),
            "params": encode(dict(params or {})),
            "provenance": {
                "command": command if command is not None else shlex.join([Path(sys.argv[0]).name, *sys.argv[1:]]),
                "date": date if date is not None else _dt.date.today().isoformat(),
            },
        }
        rec.update(encode(extra))
        self._records[key] = rec
        self._save()
        return rec

    def _save(self) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        body = {"version": STORE_VERSION, "records": {k: self._records[k] for k in sorted(self._records)}}
        tmp = self.path.with_suffix(".tmp")
        tmp.write_text(json.dumps(body, indent=1, sort_keys=True) + "\n")
        tmp.replace(self.path)


def record_oracle(key: str, values, store: OracleStore | None = None, **kw) -> dict:
    return (store or OracleStore()).record(key, values, **kw)
