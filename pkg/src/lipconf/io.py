"""JSON instance files and report helpers (schema version 1)."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InstanceFormatError, LipconfError
from .mdp import ConfMDP, Configuration, Policy
from .metric import check_distribution, validate_metric

VERSION = 1
REQUIRED_KEYS = ("version", "states", "actions", "gamma", "reward", "policy", "configuration", "initial")


@dataclass(eq=False)
class Instance:
    c: ConfMDP
    pi: Policy
    p: Configuration
    mu: np.ndarray
    pi_new: Policy | None = None
    p_new: Configuration | None = None

    @property
    def has_second_pair(self) -> bool:
        return self.pi_new is not None and self.p_new is not None


def instance_to_dict(inst: Instance) -> dict:
    c = inst.c
    out = {
        "version": VERSION,
        "states": {"n": c.n_states, "dist": c.states.dist.tolist()},
        "actions": {"n": c.n_actions, "dist": c.actions.dist.tolist()},
        "gamma": float(c.gamma),
        "reward": c.reward.tolist(),
        "policy": inst.pi.probs.tolist(),
        "configuration": inst.p.probs.tolist(),
        "initial": np.asarray(inst.mu, dtype=float).tolist(),
    }
    if inst.pi_new is not None:
        out["policy_new"] = inst.pi_new.probs.tolist()
    if inst.p_new is not None:
        out["configuration_new"] = inst.p_new.probs.tolist()
    return out


def _space(raw, name: str):
    if not isinstance(raw, dict) or "n" not in raw or "dist" not in raw:
        raise InstanceFormatError(f"{name} must be an object with keys n and dist")
    space = validate_metric(np.asarray(raw["dist"], dtype=float))
    if space.n != raw["n"]:
        raise InstanceFormatError(f"{name}.n = {raw['n']} but dist is {space.n} x {space.n}")
    return space


def instance_from_dict(data: dict) -> Instance:
    """Rebuild and re-validate an instance. Any schema or invariant problem raises InstanceFormatError."""
    if not isinstance(data, dict):
        raise InstanceFormatError("instance must be a JSON object")
    missing = [k for k in REQUIRED_KEYS if k not in data]
    if missing:
        raise InstanceFormatError(f"missing keys: {', '.join(missing)}")
    if data["version"] != VERSION:
        raise InstanceFormatError(f"unsupported version {data['version']!r}, expected {VERSION}")
    if ("policy_new" in data) != ("configuration_new" in data):
        raise InstanceFormatError("policy_new and configuration_new must be given together")
    try:
        states = _space(data["states"], "states")
        actions = _space(data["actions"], "actions")
        c = ConfMDP(states, actions, np.asarray(data["reward"], dtype=float), float(data["gamma"]))
        pi = Policy(np.asarray(data["policy"], dtype=float))
        p = Configuration(np.asarray(data["configuration"], dtype=float))
        mu = check_distribution(data["initial"], c.n_states, "initial")
        pi_new = p_new = None
        if "policy_new" in data:
            pi_new = Policy(np.asarray(data["policy_new"], dtype=float))
            p_new = Configuration(np.asarray(data["configuration_new"], dtype=float))
        for pol, conf in ((pi, p), (pi_new, p_new)):
            if pol is not None:
                _check_shapes(c, pol, conf)
    except InstanceFormatError:
        raise
    except (LipconfError, ValueError, TypeError) as exc:
        raise InstanceFormatError(f"{type(exc).__name__}: {exc}") from exc
    return Instance(c, pi, p, mu, pi_new, p_new)


def _check_shapes(c: ConfMDP, pi: Policy, p: Configuration) -> None:
    s, a = c.n_states, c.n_actions
    if pi.probs.shape != (s, a):
        raise InstanceFormatError(f"policy has shape {pi.probs.shape}, expected {(s, a)}")
    if p.probs.shape != (s, a, s):
        raise InstanceFormatError(f"configuration has shape {p.probs.shape}, expected {(s, a, s)}")


def dumps(obj: dict) -> str:
    # json writes floats with repr, which round-trips exactly
    return json.dumps(obj, indent=1, allow_nan=False) + "\n"


def content_hash(obj: dict) -> str:
    canonical = json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)
    return "sha256:" + hashlib.sha256(canonical.encode()).hexdigest()


def save_instance(inst: Instance, path) -> None:
    Path(path).write_text(dumps(instance_to_dict(inst)))


def load_instance(path) -> tuple[Instance, dict]:
    """Returns the validated instance and the raw JSON object (for hashing)."""
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise InstanceFormatError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InstanceFormatError(f"{path} is not valid JSON: {exc}") from exc
    return instance_from_dict(data), data
