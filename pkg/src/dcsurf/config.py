"""Experiment configuration: one strict-schema JSON file per run.

Every key is optional and defaults to the standard synthetic setup, but
unknown keys anywhere in the document are an error: a typo must fail the
load, not silently fall back to a default. ``dump`` always writes the
fully explicit document, so load -> dump -> load is the identity.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

from .constraints import PenaltyConfig
from .datasets import GridSpec, in_sample_spec
from .sabr import SabrParams
from .training import TrainConfig


class ConfigError(ValueError):
    """Anything wrong with a configuration document."""


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything one experiment needs: model of the world, grid, training."""

    sabr: SabrParams
    grid: GridSpec
    penalty: PenaltyConfig
    train: TrainConfig
    out_dir: str = "runs/dcsurf"
    seeds: tuple[int, ...] = (0, 1, 2)

    def __post_init__(self) -> None:
        if not self.seeds:
            raise ConfigError("seeds must be nonempty")
        if self.train.penalty != self.penalty:
            object.__setattr__(self, "train", dataclasses.replace(self.train, penalty=self.penalty))


def default_config() -> ExperimentConfig:
    sabr = SabrParams(alpha=0.2, beta=1.0, rho=-0.4, nu=0.6, f=1.0, r=0.04)
    penalty = PenaltyConfig()
    return ExperimentConfig(
        sabr=sabr,
        grid=in_sample_spec(),
        penalty=penalty,
        train=TrainConfig(penalty=penalty),
        out_dir="runs/dcsurf",
        seeds=(0, 1, 2),
    )


# every config key, with the one-line meaning --help repeats
CONFIG_KEYS: dict[str, str] = {
    "sabr.alpha": "initial volatility level of the generating model",
    "sabr.beta": "elasticity exponent (1 = lognormal dynamics)",
    "sabr.rho": "spot/vol correlation in [-1, 1]",
    "sabr.nu": "vol-of-vol, nonnegative",
    "sabr.f": "forward level the premiums are normalized by",
    "sabr.r": "continuously compounded discount rate",
    "sabr.q": "continuous dividend yield entering the forward",
    "grid.moneyness": "strictly increasing strike/forward axis of the calibration grid",
    "grid.tau": "strictly increasing expiry axis of the calibration grid",
    "grid.boundary_count": "number of analytic boundary quotes appended",
    "penalty.m_k": "multiplier of the strike-slope penalty term",
    "penalty.m_kk": "multiplier of the convexity penalty term",
    "penalty.m_tau": "multiplier of the expiry-slope penalty term",
    "penalty.g": "violation intensifier: identity or square",
    "penalty.lower_bound": "also penalize the strike slope below -e^(-r tau)",
    "penalty.self_adaptive": "promote multipliers to trainable per-point weights",
    "penalty.eta_m": "ascent rate of the self-adaptive weights",
    "train.epochs": "full-batch gradient steps",
    "train.learning_rate": "Adam step size",
    "train.beta1": "Adam first-moment decay",
    "train.beta2": "Adam second-moment decay",
    "train.eps": "Adam denominator floor",
    "train.seed": "initialization seed",
    "train.architecture": "layer sizes, inputs first, e.g. [2, 16, 16, 1]",
    "train.activation": "hidden nonlinearity: softplus, tanh, sigmoid, relu, or elu",
    "train.history_stride": "record the loss every this many epochs",
    "out_dir": "directory all artifacts are written under",
    "seeds": "seed list for matrix runs; seeds are paired across model modes",
}

_SECTIONS = {
    "sabr": ("alpha", "beta", "rho", "nu", "f", "r", "q"),
    "grid": ("moneyness", "tau", "boundary_count"),
    "penalty": ("m_k", "m_kk", "m_tau", "g", "lower_bound", "self_adaptive", "eta_m"),
    "train": (
        "epochs",
        "learning_rate",
        "beta1",
        "beta2",
        "eps",
        "seed",
        "architecture",
        "activation",
        "history_stride",
    ),
}


def _check_keys(doc: dict, allowed, where: str) -> None:
    unknown = sorted(set(doc) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown {where} key(s): {', '.join(unknown)}")


def config_from_dict(doc: dict) -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise ConfigError("configuration document must be a JSON object")
    _check_keys(doc, list(_SECTIONS) + ["out_dir", "seeds"], "top-level")
    base = default_config()

    parts: dict[str, object] = {}
    for section, fields in _SECTIONS.items():
        sub = doc.get(section, {})
        if not isinstance(sub, dict):
            raise ConfigError(f"section {section!r} must be an object")
        _check_keys(sub, fields, section)
        defaults = dataclasses.asdict(getattr(base, section))
        defaults.pop("penalty", None)  # train carries penalty separately
        merged = {**defaults, **sub}
        try:
            if section == "sabr":
                parts[section] = SabrParams(**merged)
            elif section == "grid":
                merged["moneyness"] = tuple(merged["moneyness"])
                merged["tau"] = tuple(merged["tau"])
                parts[section] = GridSpec(**merged)
            elif section == "penalty":
                parts[section] = PenaltyConfig(**merged)
            else:
                merged["architecture"] = tuple(merged["architecture"])
                parts[section] = TrainConfig(**merged, penalty=PenaltyConfig())
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid {section} section: {exc}") from exc

    seeds = doc.get("seeds", list(base.seeds))
    if not isinstance(seeds, list) or not all(isinstance(s, int) and not isinstance(s, bool) for s in seeds):
        raise ConfigError("seeds must be a list of integers")
    out_dir = doc.get("out_dir", base.out_dir)
    if not isinstance(out_dir, str) or not out_dir:
        raise ConfigError("out_dir must be a nonempty string")

    try:
        return ExperimentConfig(
            sabr=parts["sabr"],
            grid=parts["grid"],
            penalty=parts["penalty"],
            train=parts["train"],
            out_dir=out_dir,
            seeds=tuple(seeds),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def config_to_dict(cfg: ExperimentConfig) -> dict:
    train = dataclasses.asdict(cfg.train)
    train.pop("penalty")
    train["architecture"] = list(cfg.train.architecture)
    return {
        "sabr": dataclasses.asdict(cfg.sabr),
        "grid": {
            "moneyness": list(cfg.grid.moneyness),
            "tau": list(cfg.grid.tau),
            "boundary_count": cfg.grid.boundary_count,
        },
        "penalty": dataclasses.asdict(cfg.penalty),
        "train": train,
        "out_dir": cfg.out_dir,
        "seeds": list(cfg.seeds),
    }


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return config_from_dict(doc)


def dump_config(cfg: ExperimentConfig, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(config_to_dict(cfg), indent=2) + "\n")
