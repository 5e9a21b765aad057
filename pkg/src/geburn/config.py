"""Run configuration: defaults, flat key=value config files, CLI overrides.

Numeric defaults that encode calibration choices (verdict threshold,
series-monotonicity slack, counterexample construction parameters) were
fixed once against fine-grid reference runs and are recorded here; see
tests/fixtures/oracle.json for the runs that pinned them.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields as dc_fields
from typing import Optional


# solver tolerances
TOL = 1e-6                 # sup-norm residual target of a discounted solve
PROBE_TOL = 1e-4           # looser target for failure probes (only oscillation is read)
MAX_ITER = 2_000_000

# vanishing-discount schedule
LAMBDA_SCHEDULE = (0.08, 0.04, 0.02, 0.01)

# homogenization verdicts
THETA_U = 0.05             # oscillation threshold for the uniform-limit verdict
MONO_SLACK = 0.15          # relative slack when testing series monotonicity

# bifurcation search
TOL_A = 0.02

# long-time route
T_HORIZON = 16.0

# counterexample construction (cutoff value pinned at 0 by an exact corrector)
PSI_AMPLITUDE = 0.05
COUNTEREXAMPLE_D = 1.0
COUNTEREXAMPLE_SCHEDULE = (0.3, 0.2, 0.15, 0.1)

# grid-resolution slack constants: runtime bound checks allow 10*residual + C*h
SLACK_C_VALUE = 2.0        # discounted value bounds
SLACK_C_GRAD = 4.0         # discounted/evolution gradient bounds
SLACK_C_LIPA = 2.0         # Lipschitz-in-A pair check


@dataclass
class RunConfig:
    """Flat run configuration; field names double as config-file keys."""

    n: int = 2
    grid_N: int = 64
    profile: str = "cellular"
    P: tuple = (0.0, 0.0, 1.0)
    d: float = 0.2
    A: float = 0.5
    A_range: Optional[str] = None          # "lo:hi:k"
    cutoff: str = "on"                     # on | off | both
    lambda_schedule: tuple = LAMBDA_SCHEDULE
    T: float = T_HORIZON
    tol: float = TOL
    tol_A: float = TOL_A
    theta_u: float = THETA_U
    out: str = "out"
    jobs: int = 1
    deterministic: bool = True             # refuse any seeded randomness

    def validate(self):
        """Fail fast with the offending key named."""
        if self.n not in (1, 2, 3):
            raise ConfigError("n", f"must be 1, 2 or 3, got {self.n}")
        if self.grid_N < 8:
            raise ConfigError("grid_N", f"must be >= 8, got {self.grid_N}")
        if len(self.P) != self.n + 1:
            raise ConfigError("P", f"needs {self.n + 1} components for n={self.n}, got {len(self.P)}")
        if all(c == 0.0 for c in self.P):
            raise ConfigError("P", "must be nonzero")
        if self.d < 0.0:
            raise ConfigError("d", "must be >= 0")
        if self.A < 0.0:
            raise ConfigError("A", "must be >= 0")
        if self.A_range is not None:
            parse_a_range(self.A_range)
        if self.cutoff not in ("on", "off", "both"):
            raise ConfigError("cutoff", f"must be on, off or both, got {self.cutoff!r}")
        if len(self.lambda_schedule) < 3:
            raise ConfigError("lambda_schedule", "needs at least 3 entries")
        if any(b >= a for a, b in zip(self.lambda_schedule, self.lambda_schedule[1:])):
            raise ConfigError("lambda_schedule", "must be strictly decreasing")
        if any(lam <= 0 for lam in self.lambda_schedule):
            raise ConfigError("lambda_schedule", "entries must be > 0")
        if self.T <= 0:
            raise ConfigError("T", "must be > 0")
        if self.tol <= 0:
            raise ConfigError("tol", "must be > 0")
        if self.tol_A <= 0:
            raise ConfigError("tol_A", "must be > 0")
        if self.theta_u <= 0:
            raise ConfigError("theta_u", "must be > 0")
        if self.jobs < 1:
            raise ConfigError("jobs", "must be >= 1")
        return self


class ConfigError(ValueError):
    def __init__(self, key, message):
        self.key = key
        super().__init__(f"config key '{key}': {message}")


def parse_a_range(spec: str):
    """Parse 'lo:hi:k' into k evenly spaced values including both ends."""
    try:
        lo_s, hi_s, k_s = spec.split(":")
        lo, hi, k = float(lo_s), float(hi_s), int(k_s)
    except Exception as exc:
        raise ConfigError("A_range", f"expected lo:hi:k, got {spec!r}") from exc
    if k < 2 or hi <= lo:
        raise ConfigError("A_range", f"need hi > lo and k >= 2, got {spec!r}")
    step = (hi - lo) / (k - 1)
    return [lo + i * step for i in range(k)]


_TUPLE_KEYS = {"P", "lambda_schedule"}
_BOOL_KEYS = {"deterministic"}
_INT_KEYS = {"n", "grid_N", "jobs"}
_FLOAT_KEYS = {"d", "A", "T", "tol", "tol_A", "theta_u"}


def _coerce(key: str, raw: str):
    raw = raw.strip()
    if key in _TUPLE_KEYS:
        return tuple(float(tok) for tok in raw.split(",") if tok.strip())
    if key in _BOOL_KEYS:
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(key, f"expected a boolean, got {raw!r}")
    if key in _INT_KEYS:
        try:
            return int(raw)
        except ValueError as exc:
            raise ConfigError(key, f"expected an integer, got {raw!r}") from exc
    if key in _FLOAT_KEYS:
        try:
            return float(raw)
        except ValueError as exc:
            raise ConfigError(key, f"expected a number, got {raw!r}") from exc
    return raw


def load_config_file(path) -> dict:
    """Read `key = value` lines; '#' starts a comment; unknown keys rejected."""
    known = {f.name for f in dc_fields(RunConfig)}
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}", f"expected key = value, got {line!r}")
            key, raw = (tok.strip() for tok in line.split("=", 1))
            if key not in known:
                raise ConfigError(key, "unknown config key")
            out[key] = _coerce(key, raw)
    return out


def make_config(file_path=None, overrides=None) -> RunConfig:
    """Config file first, then explicit overrides (CLI flags win)."""
    values = {}
    if file_path is not None:
        values.update(load_config_file(file_path))
    for key, val in (overrides or {}).items():
        if val is None:
            continue
        values[key] = _coerce(key, val) if isinstance(val, str) else val
    cfg = RunConfig(**values)
    return cfg.validate()
