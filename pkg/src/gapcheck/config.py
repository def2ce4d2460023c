"""Run configuration: a TOML file of flat dotted keys plus ``key=value`` overrides.

Both ``model.kind = "lognormal"`` and a ``[model]`` table with ``kind = ...``
address the same key. Unknown keys and ill-typed values are rejected with
the offending field named.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Iterable, Mapping, Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigParseError

COMMANDS = ("diagnose", "sweep-k", "couple-compare", "fit", "figures")
FORMATS = ("csv", "json", "svg")
COUPLINGS = ("iid", "antithetic", "stratified")

DEFAULTS: Dict[str, Any] = {
    "seed": 0,
    "model.kind": "gaussian_linear",
    "model.A": [[1.0]],
    "model.noise_std": 1.0,
    "model.v": [0.0],
    "model.m": 0.0,
    "model.s": 0.5,
    "proposal.loc": [0.0],
    "proposal.log_scale": [0.0],
    "estimator.k": 1,
    "estimator.replications": 100_000,
    "estimator.coupling": "iid",
    "estimator.brute_force_samples": 0,
    "sweep.k_grid": [1, 2, 4, 8, 16, 32, 64],
    "sweep.budget": 1_280_000,
    "couple.k": 2,
    "couple.replications": 100_000,
    "couple.couplings": ["iid", "antithetic", "stratified"],
    "fit.steps": 2000,
    "fit.step_size": 0.01,
    "fit.k": 1,
    "fit.num_blocks": 8,
    "fit.eval_every": 50,
    "fit.eval_samples": 4096,
    "figures.k_values": [1, 4, 16, 64],
    "figures.points": 2000,
    "figures.majorizer": False,
    "output.dir": "out",
    "output.formats": ["csv", "json", "svg"],
}

# The concentration figure is drawn from the log-normal(0, 0.5) benchmark.
COMMAND_DEFAULTS: Dict[str, Dict[str, Any]] = {
    "figures": {"model.kind": "lognormal"},
}


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _is_real(v) -> bool:
    return (_is_int(v) or isinstance(v, float)) and math.isfinite(v)


def _vector(v) -> bool:
    return isinstance(v, list) and len(v) >= 1 and all(_is_real(x) for x in v)


def _matrix(v) -> bool:
    return (isinstance(v, list) and len(v) >= 1 and all(_vector(r) for r in v)
            and len({len(r) for r in v}) == 1)


def _pos_int(v) -> bool:
    return _is_int(v) and v >= 1


def _nonneg_int(v) -> bool:
    return _is_int(v) and v >= 0


def _pos_real(v) -> bool:
    return _is_real(v) and v > 0


def _nonneg_real(v) -> bool:
    return _is_real(v) and v >= 0


def _int_list(v) -> bool:
    return isinstance(v, list) and len(v) >= 1 and all(_pos_int(x) for x in v)


def _choice_list(choices):
    return lambda v: isinstance(v, list) and len(v) >= 1 and all(x in choices for x in v)


def _choice(choices):
    return lambda v: v in choices


_RULES = {
    "seed": (_nonneg_int, "a non-negative integer"),
    "model.kind": (_choice(("gaussian_linear", "lognormal")), '"gaussian_linear" or "lognormal"'),
    "model.A": (_matrix, "a non-empty rectangular matrix of reals"),
    "model.noise_std": (_pos_real, "a real > 0"),
    "model.v": (_vector, "a non-empty list of reals"),
    "model.m": (_is_real, "a finite real"),
    "model.s": (_nonneg_real, "a real >= 0"),
    "proposal.loc": (_vector, "a non-empty list of reals"),
    "proposal.log_scale": (_vector, "a non-empty list of reals"),
    "estimator.k": (_pos_int, "an integer >= 1"),
    "estimator.replications": (_pos_int, "an integer >= 1"),
    "estimator.coupling": (_choice(COUPLINGS), "one of " + ", ".join(COUPLINGS)),
    "estimator.brute_force_samples": (_nonneg_int, "an integer >= 0 (0 uses the exact evidence)"),
    "sweep.k_grid": (_int_list, "a non-empty list of integers >= 1"),
    "sweep.budget": (_pos_int, "an integer >= 1"),
    "couple.k": (_pos_int, "an integer >= 1"),
    "couple.replications": (_pos_int, "an integer >= 1"),
    "couple.couplings": (_choice_list(COUPLINGS), "a list drawn from " + ", ".join(COUPLINGS)),
    "fit.steps": (_pos_int, "an integer >= 1"),
    "fit.step_size": (_pos_real, "a real > 0"),
    "fit.k": (_pos_int, "an integer >= 1"),
    "fit.num_blocks": (_pos_int, "an integer >= 1"),
    "fit.eval_every": (_pos_int, "an integer >= 1"),
    "fit.eval_samples": (lambda v: _is_int(v) and v >= 2, "an integer >= 2"),
    "figures.k_values": (_int_list, "a non-empty list of integers >= 1"),
    "figures.points": (_pos_int, "an integer >= 1"),
    "figures.majorizer": (lambda v: isinstance(v, bool), "true or false"),
    "output.dir": (lambda v: isinstance(v, str) and v != "", "a non-empty path string"),
    "output.formats": (_choice_list(FORMATS), "a list drawn from " + ", ".join(FORMATS)),
}


def flatten(tree: Mapping[str, Any], prefix: str = "") -> Dict[str, Any]:
    flat = {}
    for key, value in tree.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            flat.update(flatten(value, name + "."))
        else:
            flat[name] = value
    return flat


def _coerce(key: str, value: Any) -> Any:
    # Integers are acceptable wherever a real is expected.
    if key in ("model.A",):
        return [[float(x) for x in row] for row in value]
    if key in ("model.v", "proposal.loc", "proposal.log_scale"):
        return [float(x) for x in value]
    if key in ("model.noise_std", "model.m", "model.s", "fit.step_size"):
        return float(value)
    return value


def validate(values: Mapping[str, Any], source: str = "config") -> Dict[str, Any]:
    out = {}
    for key, value in values.items():
        rule = _RULES.get(key)
        if rule is None:
            raise ConfigParseError(f"{source}: unknown field {key!r}")
        check, expected = rule
        if not check(value):
            raise ConfigParseError(f"{source}: field {key!r} must be {expected}, got {value!r}")
        out[key] = _coerce(key, value)
    return out


def parse_override(text: str) -> tuple:
    """Parse one ``key=value`` override; the value uses TOML syntax, bare words are strings."""
    if "=" not in text:
        raise ConfigParseError(f"--set {text!r}: expected key=value")
    key, raw = (s.strip() for s in text.split("=", 1))
    try:
        value = tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw
    return key, value


@dataclass(frozen=True)
class RunConfig:
    command: str
    values: Mapping[str, Any]

    def __getitem__(self, key: str) -> Any:
        return self.values[key]

    @property
    def out_dir(self) -> Path:
        return Path(self.values["output.dir"])

    @property
    def formats(self) -> tuple:
        return tuple(self.values["output.formats"])

    @property
    def seed(self) -> int:
        return int(self.values["seed"])


def load_file(path: Path) -> Dict[str, Any]:
    text = Path(path).read_text(encoding="utf-8")
    try:
        tree = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigParseError(f"{path}: {exc}") from exc
    return flatten(tree)


def build_config(
    command: str,
    path: Optional[Path] = None,
    overrides: Iterable[str] = (),
    extra: Optional[Mapping[str, Any]] = None,
) -> RunConfig:
    """Merge defaults (global, then per command), the config file, ``--set`` overrides and explicit CLI flags (in that order)."""
    if command not in COMMANDS:
        raise ConfigParseError(f"unknown command {command!r}; expected one of {', '.join(COMMANDS)}")
    values = dict(DEFAULTS)
    values.update(COMMAND_DEFAULTS.get(command, {}))
    if path is not None:
        values.update(validate(load_file(path), str(path)))
    for text in overrides:
        key, value = parse_override(text)
        values.update(validate({key: value}, f"--set {key}"))
    if extra:
        values.update(validate(dict(extra), "command line"))
    return RunConfig(command=command, values=values)
