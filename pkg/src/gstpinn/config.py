"""Experiment configuration: a TOML file of sections, every field defaulted.

The effective config (defaults filled in) is what gets echoed into output
directories, so a run can always be reproduced from its frozen copy.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
from pathlib import Path

import numpy as np
import tomli
import tomli_w

from .loss import MODES, LossWeights
from .problems import KINDS, BurgersParams, FisherParams, PdeProblem, SinusoidIC, SorptionParams
from .sampling import SampleCounts


class ConfigError(ValueError):
    """Carries a list of (field, message) pairs."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(f"{f}: {m}" for f, m in self.errors))


def _pos(v):
    return v > 0


def _nonneg(v):
    return v >= 0


def _unit_open(v):
    return 0 < v < 1


def _choice(*opts):
    def check(v):
        return v in opts

    check.doc = "one of " + ", ".join(opts)
    return check


# section -> key -> (type, default, check, hint)
SCHEMA = {
    "run": {
        "problem": (str, "burgers", _choice(*KINDS), None),
        "mode": (str, "gstpinn", _choice(*MODES), None),
        # -1 draws a fresh seed from OS entropy (recorded in outputs); not allowed with deterministic
        "seed": (int, 0, lambda v: v >= -1, ">= 0, or -1 for a random seed"),
        "deterministic": (bool, True, None, None),
        "out": (str, "out", None, None),
    },
    "burgers": {
        "eta_v": (float, 0.01, _pos, "> 0"),
        "L_x": (float, 1.0, _pos, "> 0"),
        "T_max": (float, 2.0, _pos, "> 0"),
        "t_residual": (str, "corrected", _choice("corrected", "as_printed"), None),
    },
    "fisher": {
        "xi_v": (float, 0.5, _pos, "> 0"),
        "rho_m": (float, 1.5, _pos, "> 0"),
        "L_x": (float, 1.0, _pos, "> 0"),
        "T_max": (float, 1.0, _pos, "> 0"),
    },
    "sorption": {
        "psi": (float, 0.31, _unit_open, "in (0, 1)"),
        "k_f": (float, 3.5e-4, _nonneg, ">= 0"),
        "n_f": (float, 0.875, lambda v: 0 < v <= 1, "in (0, 1]"),
        "rho_s": (float, 2875.0, _pos, "> 0"),
        "C_d": (float, 4.5e-4, _pos, "> 0"),
        "u0": (float, 0.16395, _nonneg, ">= 0"),
        "T_max": (float, 500.0, _pos, "> 0"),
        "L_x": (float, 1.0, _pos, "> 0"),
        "inlet": (float, 1.0, _nonneg, ">= 0"),
        "robin": (str, "outflow", _choice("outflow", "as_printed"), None),
    },
    "ic": {
        "seed": (int, 0, _nonneg, ">= 0"),
        "n_modes": (int, 2, _pos, ">= 1"),
        "max_mode": (int, 2, _pos, ">= 1"),
    },
    "network": {
        "hidden": (list, [32, 32, 32, 32], lambda v: len(v) > 0 and all(isinstance(n, int) and n > 0 for n in v),
                   "non-empty list of positive integers"),
    },
    "optimizer": {
        "lr": (float, 1e-3, _pos, "> 0"),
        "iterations": (int, 20000, _nonneg, ">= 0"),
        "log_every": (int, 100, _pos, ">= 1"),
        "checkpoint_every": (int, 0, _nonneg, ">= 0 (0 = final only)"),
    },
    "weights": {
        "w_G": (float, 1.0, _nonneg, ">= 0"),
        "w_D": (float, 1.0, _nonneg, ">= 0"),
        "w_S": (float, 1.0, _nonneg, ">= 0"),
        "w_g_t": (float, 0.01, _nonneg, ">= 0"),
        "w_g_x": (float, 0.01, _nonneg, ">= 0"),
        "w_p": (float, 1.0, _nonneg, ">= 0"),
        "w_d": (float, 1.0, _nonneg, ">= 0"),
    },
    "selftrain": {
        "q": (float, 0.1, lambda v: 0 < v <= 1, "in (0, 1]"),
        "r": (int, 2, _nonneg, ">= 0"),
        "p": (float, 500.0, lambda v: v >= 1 and (math.isinf(v) or v == int(v)), "integer >= 1 or inf"),
    },
    "sampling": {
        "n_domain": (int, 10000, _pos, ">= 1"),
        "n_boundary": (int, 402, lambda v: v >= 0 and v % 2 == 0, "even, >= 0"),
        "n_initial": (int, 512, _nonneg, ">= 0"),
        "n_labeled": (int, 100, _nonneg, ">= 0"),
        "n_gradient": (int, 0, _nonneg, ">= 0 (0 = reuse domain points)"),
    },
    "eval": {
        "n_x": (int, 512, lambda v: v >= 16, ">= 16"),
        "n_t": (int, 201, lambda v: v >= 2, ">= 2"),
        "reference": (str, "", None, "path to a saved reference ('' = solve)"),
        "min_cells": (int, 0, _nonneg, ">= 0 (0 = solver default)"),
        "rtol": (float, 1e-6, _pos, "> 0"),
    },
}


def defaults() -> dict:
    return {s: {k: copy.deepcopy(spec[1]) for k, spec in keys.items()} for s, keys in SCHEMA.items()}


def _coerce(section, key, value, errors):
    typ, _, check, hint = SCHEMA[section][key]
    name = f"{section}.{key}"
    if typ is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if typ is float and isinstance(value, str) and value.strip().lower() in ("inf", "infinity"):
        value = math.inf
    if typ is int and isinstance(value, float) and value.is_integer():
        value = int(value)
    if not isinstance(value, typ) or (typ is int and isinstance(value, bool)):
        errors.append((name, f"expected {typ.__name__}, got {value!r}"))
        return None
    if typ is float and math.isnan(value):
        errors.append((name, "must not be NaN"))
        return None
    if check is not None and not check(value):
        errors.append((name, f"{value!r} not allowed, expected {hint or getattr(check, 'doc', 'valid value')}"))
        return None
    return value


def _parse_override(text: str):
    """``section.key=value`` with the value read as a TOML scalar or array."""
    if "=" not in text or "." not in text.split("=", 1)[0]:
        raise ConfigError([(text, "override must look like section.key=value")])
    path, raw = text.split("=", 1)
    section, key = path.strip().split(".", 1)
    try:
        value = tomli.loads(f"v = {raw.strip()}")["v"]
    except tomli.TOMLDecodeError:
        value = raw.strip()
    return section, key, value


class ExperimentConfig:
    def __init__(self, values: dict):
        self.values = values

    # --- construction -----------------------------------------------------

    @classmethod
    def from_dict(cls, raw: dict | None = None, overrides=()) -> "ExperimentConfig":
        raw = copy.deepcopy(raw or {})
        for item in overrides:
            section, key, value = item if isinstance(item, tuple) else _parse_override(item)
            raw.setdefault(section, {})[key] = value
        errors = []
        values = defaults()
        for section, body in raw.items():
            if section not in SCHEMA:
                errors.append((section, "unknown section"))
                continue
            if not isinstance(body, dict):
                errors.append((section, "must be a table"))
                continue
            for key, value in body.items():
                if key not in SCHEMA[section]:
                    errors.append((f"{section}.{key}", "unknown field"))
                    continue
                v = _coerce(section, key, value, errors)
                if v is not None:
                    values[section][key] = v
        if not errors:
            errors.extend(_cross_checks(values))
        if errors:
            raise ConfigError(errors)
        return cls(values)

    @classmethod
    def load(cls, path, overrides=()) -> "ExperimentConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError([(str(path), "config file not found")])
        try:
            raw = tomli.loads(path.read_text())
        except tomli.TOMLDecodeError as exc:
            raise ConfigError([(str(path), f"TOML syntax: {exc}")]) from None
        return cls.from_dict(raw, overrides)

    def replace(self, **changes) -> "ExperimentConfig":
        """Keyword form of overrides: ``replace(run__mode="pinn")``."""
        items = []
        for name, value in changes.items():
            section, key = name.split("__", 1)
            items.append((section, key, value))
        return ExperimentConfig.from_dict(self.values, items)

    # --- serialization ----------------------------------------------------

    def to_toml(self) -> str:
        vals = copy.deepcopy(self.values)
        if math.isinf(vals["selftrain"]["p"]):
            vals["selftrain"]["p"] = "inf"
        return tomli_w.dumps(vals)

    def save(self, path) -> None:
        Path(path).write_text(f"# config_hash = {self.hash}\n" + self.to_toml())

    @property
    def hash(self) -> str:
        blob = json.dumps(self.values, sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def __eq__(self, other):
        return isinstance(other, ExperimentConfig) and self.values == other.values

    def __getitem__(self, section) -> dict:
        return self.values[section]

    # --- derived objects --------------------------------------------------

    @property
    def kind(self) -> str:
        return self.values["run"]["problem"]

    @property
    def mode(self) -> str:
        return self.values["run"]["mode"]

    @property
    def seed(self) -> int:
        return self.values["run"]["seed"]

    def resolved(self) -> "ExperimentConfig":
        """Same config with a random seed (-1) replaced by a concrete draw."""
        if self.seed >= 0:
            return self
        seed = int(np.random.SeedSequence().generate_state(1)[0] >> 1)
        return self.replace(run__seed=seed)

    def problem(self) -> PdeProblem:
        kind = self.kind
        body = dict(self.values[kind])
        if kind == "sorption":
            return PdeProblem(kind, SorptionParams(**body))
        ic_cfg = self.values["ic"]
        ic = SinusoidIC.draw(ic_cfg["seed"], ic_cfg["n_modes"], ic_cfg["max_mode"])
        cls = BurgersParams if kind == "burgers" else FisherParams
        return PdeProblem(kind, cls(ic=ic, **body))

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        return (2, *self.values["network"]["hidden"], 1)

    def weights(self) -> LossWeights:
        w = self.values["weights"]
        return LossWeights(w["w_G"], w["w_D"], w["w_S"], (w["w_g_t"], w["w_g_x"]), w["w_p"], w["w_d"])

    def counts(self) -> SampleCounts:
        return SampleCounts(**self.values["sampling"])

    @property
    def p(self):
        p = self.values["selftrain"]["p"]
        return p if math.isinf(p) else int(p)


def _cross_checks(values) -> list:
    errors = []
    if values["run"]["deterministic"] and values["run"]["seed"] < 0:
        errors.append(("run.seed", "a fixed seed >= 0 is required when run.deterministic is true"))
    if values["run"]["problem"] == "sorption" and values["sorption"]["u0"] <= 0:
        errors.append(("sorption.u0", "must be > 0 (u^(n_f-1) is singular at 0)"))
    return errors


def mode_warnings(cfg: ExperimentConfig) -> list[str]:
    out = []
    w = cfg["weights"]
    if cfg.mode in ("pinn", "stpinn") and (w["w_g_t"] > 0 or w["w_g_x"] > 0):
        out.append(f"mode {cfg.mode} ignores gradient weights w_g_t/w_g_x")
    if cfg.mode in ("pinn", "gpinn") and not math.isinf(cfg["selftrain"]["p"]):
        out.append(f"mode {cfg.mode} ignores selftrain settings")
    return out
