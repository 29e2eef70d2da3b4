"""Experiment configuration: flat key=value files, MSRE_ environment variables, flags."""
from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import asdict, dataclass, field, fields

from ..errors import ConfigError

ENV_PREFIX = "MSRE_"


def xi_pred(d: int, H: float) -> float:
    """Predicted roughness exponent (4−d)/(4−2H) for d < 4; 0 otherwise."""
    return (4 - d) / (4 - 2 * H) if d < 4 else 0.0


def chi_pred(d: int, H: float) -> float:
    """Predicted energy exponent (4−d)/(2−H) + d − 2 for d < 4; d/2 for d ≥ 4."""
    return (4 - d) / (2 - H) + d - 2 if d < 4 else d / 2


def height_scale(d: int, H: float, L: int) -> float:
    """L^ξ (d<4), (log L)^{1/(4−2H)} (d=4), 1 (d≥5)."""
    if d < 4:
        return L ** xi_pred(d, H)
    if d == 4:
        return math.log(max(L, 2)) ** (1 / (4 - 2 * H))
    return 1.0


@dataclass
class ExperimentConfig:
    d: int
    n: int
    H: float
    L_values: list
    samples_per_L: int
    seed: int
    kappa: float = 4.0
    delta: float = 1.0
    tau_const: float = 0.0
    solver: str = "auto"
    output: str = "records.jsonl"
    h_ladder: list = field(default_factory=lambda: [0.25, 0.5, 1.0, 2.0])
    store_heights: bool = False
    max_doublings: int = 3
    restarts: int = 4

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.d < 1 or self.n < 1:
            raise ConfigError("d and n must be positive")
        if not 0 < self.H < 1:
            raise ConfigError("H must lie in (0,1)")
        Ls = [int(x) for x in self.L_values]
        if not Ls or any(b <= a for a, b in zip(Ls, Ls[1:])) or Ls[0] < 1:
            raise ConfigError("L_values must be positive and strictly increasing")
        self.L_values = Ls
        if self.samples_per_L < 0:
            raise ConfigError("samples_per_L must be >= 0")
        if self.kappa <= 0 or self.delta <= 0:
            raise ConfigError("kappa and delta must be positive")
        solver = self.resolved_solver()
        if solver == "chain_dp" and self.d != 1:
            raise ConfigError("chain_dp needs d = 1")
        if solver in ("graphcut",) and self.n != 1:
            raise ConfigError("graphcut needs n = 1")
        if solver not in ("chain_dp", "graphcut", "bruteforce", "coord_descent", "transfer"):
            raise ConfigError(f"unknown solver {self.solver!r}")

    def resolved_solver(self) -> str:
        if self.solver != "auto":
            return self.solver
        if self.d == 1:
            return "chain_dp"
        if self.n == 1:
            return "graphcut"
        return "coord_descent"

    def grid_K(self, L: int) -> int:
        """Grid half-extent: Kδ ≈ κ · (height scale) plus room for a constant boundary."""
        k = math.ceil(self.kappa * height_scale(self.d, self.H, L) / self.delta)
        return max(1, k + math.ceil(abs(self.tau_const) / self.delta))

    def ladder(self, L: int):
        scale = height_scale(self.d, self.H, L)
        return [m * scale for m in self.h_ladder]

    def to_dict(self) -> dict:
        return asdict(self)

    def hash(self) -> str:
        """Hash of everything that affects record contents."""
        body = self.to_dict()
        body.pop("output", None)
        raw = json.dumps(body, sort_keys=True).encode()
        return hashlib.sha256(raw).hexdigest()[:16]

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown configuration key(s): {', '.join(sorted(unknown))}")
        required = ["d", "n", "H", "L_values", "samples_per_L", "seed"]
        for key in required:
            if key not in raw or raw[key] is None:
                raise ConfigError(f"missing required key: {key}")
        return cls(**{k: _coerce(k, v) for k, v in raw.items()})


_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def _coerce(key, value):
    t = _TYPES.get(key, "str")
    if isinstance(value, str):
        v = value.strip()
        try:
            if t == "int":
                return int(v)
            if t == "float":
                return float(v)
            if t == "bool":
                if v.lower() in ("1", "true", "yes", "on"):
                    return True
                if v.lower() in ("0", "false", "no", "off"):
                    return False
                raise ValueError(v)
            if t == "list":
                parts = [p for p in v.replace(",", " ").split() if p]
                return [float(p) if ("." in p or "e" in p.lower()) else int(p) for p in parts]
        except ValueError:
            raise ConfigError(f"bad value for {key}: {value!r}") from None
        return v
    return value


def read_kv_file(path) -> dict:
    """Parse a flat key=value file; '#' starts a comment."""
    out = {}
    try:
        fh = open(path)
    except OSError as exc:
        raise exc
    with fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value")
            k, v = line.split("=", 1)
            out[k.strip().replace("-", "_")] = v.strip()
    return out


def read_env(keys, environ=None) -> dict:
    env = os.environ if environ is None else environ
    out = {}
    for k in keys:
        name = ENV_PREFIX + k.upper()
        if name in env:
            out[k] = env[name]
    return out


def merge_sources(file_values: dict, env_values: dict, flag_values: dict) -> dict:
    """file < environment < flags; None flag values are treated as unset."""
    merged = dict(file_values)
    merged.update(env_values)
    merged.update({k: v for k, v in flag_values.items() if v is not None})
    return merged
