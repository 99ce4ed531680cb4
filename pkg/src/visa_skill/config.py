"""Run configuration: line-based ``section.key = value`` text.

Blank lines and ``#`` comments are ignored.  Unknown sections or keys are
errors, as are malformed values.  Every key is optional; omitted keys keep
their defaults.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .diffcore import SgdConfig
from .evalkit import parse_scheme
from .model import LossWeights, ModelConfig
from .sgm import ExistenceRegConfig
from .synthdata import SynthConfig


class ConfigError(ValueError):
    """Invalid key, value or combination in a run configuration."""


@dataclass(frozen=True)
class DataConfig:
    dataset: str = ""
    scheme: str = "louo"
    seed: int = 0


@dataclass(frozen=True)
class SynthSection:
    n_users: int = 4
    trials_per_user: int = 5
    synth: SynthConfig = field(default_factory=SynthConfig)


@dataclass(frozen=True)
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    sgd: SgdConfig = field(default_factory=SgdConfig)
    weights: LossWeights = field(default_factory=LossWeights)
    data: DataConfig = field(default_factory=DataConfig)
    synth: SynthSection = field(default_factory=SynthSection)


# public key -> ModelConfig field, where the names differ
_MODEL_ALIASES = {"c_prime": "c_out"}
_OPT_SGD = {f.name for f in dataclasses.fields(SgdConfig)}
_OPT_WEIGHTS = {"lambda_exist", "lambda1", "lambda2"}
_OPT_EXIST = {"alpha", "beta", "epsilon"}


def _convert(text: str, like, key: str):
    """Parse ``text`` into the type of the default value ``like``."""
    try:
        if isinstance(like, bool):
            low = text.lower()
            if low in ("true", "on", "yes", "1"):
                return True
            if low in ("false", "off", "no", "0"):
                return False
            raise ValueError(text)
        if isinstance(like, int):
            return int(text)
        if isinstance(like, float):
            return float(text)
        if isinstance(like, tuple):
            return tuple(float(p) for p in text.split(","))
        return text
    except ValueError:
        raise ConfigError(f"bad value for {key}: {text!r}") from None


def _field_defaults(cls) -> dict:
    out = {}
    for f in dataclasses.fields(cls):
        if f.default is not dataclasses.MISSING:
            out[f.name] = f.default
        elif f.default_factory is not dataclasses.MISSING:
            out[f.name] = f.default_factory()
    return out


def _model_field(key: str) -> str:
    """Config keys are case-insensitive; map one onto its ModelConfig field."""
    if key in _MODEL_ALIASES:
        return _MODEL_ALIASES[key]
    by_lower = {f.name.lower(): f.name for f in dataclasses.fields(ModelConfig)}
    return by_lower.get(key, key)


def parse_config(text: str) -> RunConfig:
    entries: dict[tuple[str, str], tuple[str, int]] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        lhs, eq, rhs = line.partition("=")
        if not eq:
            raise ConfigError(f"line {lineno}: expected 'section.key = value'")
        section, dot, key = lhs.strip().partition(".")
        if not dot or not key:
            raise ConfigError(f"line {lineno}: key {lhs.strip()!r} lacks a section")
        entries[(section.lower(), key.strip().lower())] = (rhs.strip(), lineno)

    model_defaults = _field_defaults(ModelConfig)
    model_defaults["c_mid"] = 0  # None in the dataclass; 0 here means "same as C"
    sgd_defaults = _field_defaults(SgdConfig)
    w_defaults = _field_defaults(LossWeights)
    e_defaults = _field_defaults(ExistenceRegConfig)
    data_defaults = _field_defaults(DataConfig)
    synth_sec_defaults = {"n_users": 4, "trials_per_user": 5}
    synth_defaults = _field_defaults(SynthConfig)

    model, sgd, weights, exist, data, sec, synth = {}, {}, {}, {}, {}, {}, {}
    for (section, key), (value, lineno) in entries.items():
        name = f"{section}.{key}"
        if section == "model":
            fname = _model_field(key)
            if fname not in model_defaults:
                raise ConfigError(f"line {lineno}: unknown key {name}")
            model[fname] = _convert(value, model_defaults[fname], name)
        elif section == "optimizer":
            if key in _OPT_SGD:
                sgd[key] = _convert(value, sgd_defaults[key], name)
            elif key in _OPT_WEIGHTS:
                weights[key] = _convert(value, w_defaults[key], name)
            elif key in _OPT_EXIST:
                exist[key] = _convert(value, e_defaults[key], name)
            else:
                raise ConfigError(f"line {lineno}: unknown key {name}")
        elif section == "data":
            if key not in data_defaults:
                raise ConfigError(f"line {lineno}: unknown key {name}")
            data[key] = _convert(value, data_defaults[key], name)
        elif section == "synth":
            if key in synth_sec_defaults:
                sec[key] = _convert(value, synth_sec_defaults[key], name)
            elif key in synth_defaults:
                synth[key] = _convert(value, synth_defaults[key], name)
            else:
                raise ConfigError(f"line {lineno}: unknown key {name}")
        else:
            raise ConfigError(f"line {lineno}: unknown section {section!r}")

    if model.get("c_mid", None) == 0:
        model["c_mid"] = None
    if "seed" in data and "seed" not in synth:
        synth["seed"] = data["seed"]
    try:
        if "scheme" in data:
            parse_scheme(data["scheme"])
        return RunConfig(
            model=ModelConfig(**model),
            sgd=SgdConfig(**sgd),
            weights=LossWeights(**weights, exist=ExistenceRegConfig(**exist)),
            data=DataConfig(**data),
            synth=SynthSection(**sec, synth=SynthConfig(**synth)),
        )
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path | None) -> RunConfig:
    """Read a config file; ``None`` gives the defaults."""
    if path is None:
        return RunConfig()
    return parse_config(Path(path).read_text())


def with_seed(config: RunConfig, seed: int) -> RunConfig:
    """Override the data seed (and the synthesis seed with it)."""
    return dataclasses.replace(
        config,
        data=dataclasses.replace(config.data, seed=seed),
        synth=dataclasses.replace(config.synth, synth=dataclasses.replace(config.synth.synth, seed=seed)),
    )


def format_config(config: RunConfig) -> str:
    """Inverse of :func:`parse_config` for every representable key."""
    lines = []
    m = config.model
    for f in dataclasses.fields(ModelConfig):
        v = getattr(m, f.name)
        key = {"c_out": "c_prime", "K": "k", "C": "c"}.get(f.name, f.name)
        lines.append(f"model.{key} = {_fmt(0 if v is None else v)}")
    for f in dataclasses.fields(SgdConfig):
        lines.append(f"optimizer.{f.name} = {_fmt(getattr(config.sgd, f.name))}")
    for k in ("lambda_exist", "lambda1", "lambda2"):
        lines.append(f"optimizer.{k} = {_fmt(getattr(config.weights, k))}")
    for k in ("alpha", "beta", "epsilon"):
        lines.append(f"optimizer.{k} = {_fmt(getattr(config.weights.exist, k))}")
    for f in dataclasses.fields(DataConfig):
        lines.append(f"data.{f.name} = {_fmt(getattr(config.data, f.name))}")
    lines.append(f"synth.n_users = {config.synth.n_users}")
    lines.append(f"synth.trials_per_user = {config.synth.trials_per_user}")
    for f in dataclasses.fields(SynthConfig):
        lines.append(f"synth.{f.name} = {_fmt(getattr(config.synth.synth, f.name))}")
    return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ",".join(repr(float(x)) for x in v)
    return str(v)
