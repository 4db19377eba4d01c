"""
Job file validation
"""

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional

from ..errors import ConfigError

JOB_KEYS = {'manifold', 'command', 'params', 'output_dir', 'seed'}

SOURCE_KEYS = {'point', 'boundary', 'component'}

# command -> allowed params
COMMAND_PARAMS: Dict[str, set] = {
    'geodesic': {'point', 'velocity', 't', 'samples', 'tol'},
    'conjugate-locus': SOURCE_KEYS | {'rays', 't_max', 'k_max', 'classify', 'tol'},
    'cut-locus': SOURCE_KEYS | {'resolution', 'rays', 't_max', 'samples', 'epsilon_min', 'tol'},
    'solve-hjbvp': SOURCE_KEYS | {'resolution', 'samples', 'epsilon_min', 'semiconcavity', 'tol'},
    'split-family': {'family', 'a_values', 'b_values', 'point', 'boundary', 'resolution', 'rays',
                     't_max', 'conjugacy', 'samples'},
    'verify-balanced': {'family', 'a', 'b', 'point', 'boundary', 'resolution', 'rays', 't_max',
                        'balance_tol', 'delta', 'fan', 'check_resolution'},
    'trace-cdc': {'model', 'radial', 'start', 'max_length', 'step', 'slack_threshold', 'acdc',
                  'perturbation', 'retort', 'join'},
    'd4-roots': {'kind', 'a', 'b'},
}

NO_MANIFOLD = {'trace-cdc', 'd4-roots'}

POSITIVE = {'tol', 'epsilon_min', 'balance_tol', 'delta', 'step', 'slack_threshold', 'max_length',
            't', 't_max'}


@dataclass
class JobSpec:
    """A single job: manifold document, command and its parameters"""
    command: str
    manifold: Optional[Dict[str, Any]] = None
    params: Dict[str, Any] = field(default_factory=dict)
    output_dir: Optional[str] = None
    seed: int = 0

    @classmethod
    def from_dict(cls, doc: Dict[str, Any], command: Optional[str] = None) -> 'JobSpec':
        """
        Validate a job document

        Args:
            doc: Parsed job JSON
            command: Command from the command line; must agree with doc['command'] if both are given

        Returns:
            JobSpec

        Raises:
            ConfigError: On unknown keys, unknown commands or non-positive tolerances
        """
        if not isinstance(doc, dict):
            raise ConfigError("job must be a JSON object")
        unknown = set(doc) - JOB_KEYS
        if unknown:
            raise ConfigError(f"unknown job keys: {sorted(unknown)}")
        cmd = doc.get('command', command)
        if command is not None and cmd != command:
            raise ConfigError(f"job command '{cmd}' does not match '{command}'")
        if cmd not in COMMAND_PARAMS:
            raise ConfigError(f"unknown command '{cmd}'; available: {sorted(COMMAND_PARAMS)}")
        params = doc.get('params') or {}
        if not isinstance(params, dict):
            raise ConfigError("params must be an object")
        bad = set(params) - COMMAND_PARAMS[cmd]
        if bad:
            raise ConfigError(f"unknown params for {cmd}: {sorted(bad)}")
        for key in POSITIVE & set(params):
            value = params[key]
            if not isinstance(value, (int, float)) or isinstance(value, bool) or value <= 0:
                raise ConfigError(f"{key} must be a positive number, got {value!r}")
        manifold = doc.get('manifold')
        if cmd not in NO_MANIFOLD and not isinstance(manifold, dict):
            raise ConfigError(f"{cmd} needs a manifold document")
        seed = doc.get('seed', 0)
        if not isinstance(seed, int) or isinstance(seed, bool):
            raise ConfigError("seed must be an integer")
        return cls(cmd, manifold, dict(params), doc.get('output_dir'), seed)

    @classmethod
    def load(cls, path: Path, command: Optional[str] = None) -> 'JobSpec':
        try:
            with open(path, encoding='utf-8') as f:
                doc = json.load(f)
        except FileNotFoundError as e:
            raise ConfigError(f"job file not found: {path}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"job file {path} is not valid JSON: {e}") from e
        return cls.from_dict(doc, command)

    def get(self, key: str, default: Any = None) -> Any:
        return self.params.get(key, default)
