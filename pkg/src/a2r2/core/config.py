"""Run configuration: defaults, YAML file loading, and key=value overrides.

One top-level config file drives every command; CLI flags are reserved for
paths, seed, verbosity, and ``-o key=value`` overrides.
"""

from __future__ import annotations

import copy
import os
from dataclasses import dataclass, field, fields
from typing import Optional

import yaml

from .types import A2R2Error

VALID_STRATEGIES = ("a2r2", "direct", "cot", "best_of_n")

# Zero-shot reasoning suffix appended verbatim to the generation prompt
# when strategy == "cot".
COT_SUFFIX = "Let's think step by step"


class ConfigError(A2R2Error):
    """Invalid configuration value or file."""


@dataclass(frozen=True)
class PromptTemplates:
    """Role-specific prompt templates.

    Placeholder names are fixed by contract: {image}, {image_a}, {image_b},
    {latex}, {diff}. Image placeholders expand to positional markers; the
    actual PNG payloads travel alongside the prompt in the request.
    """

    generation: str = (
        "You are given {image}, which shows a rendered mathematical expression. "
        "Transcribe it into LaTeX. Output only the LaTeX code for the expression, "
        "with no surrounding text."
    )
    comparison: str = (
        "{image_a} shows the original expression and {image_b} shows a rendering "
        "of a candidate LaTeX transcription. List every visual difference between "
        "them as a numbered list, one difference per line, most significant first. "
        "If the two images show the same expression, reply with exactly the single "
        "line: NO DIFFERENCES"
    )
    verification: str = (
        "A previous comparison between two renderings reported these differences:\n"
        "{diff}\n"
        "{image_a} and {image_b} are cropped close-ups of the region where the "
        "differences were claimed. Check each claim against the crops. Reply with "
        "a numbered list containing only the differences that are really present, "
        "keeping their original numbering in parentheses. If none are real, reply "
        "with exactly the single line: NO DIFFERENCES"
    )
    refinement: str = (
        "The current LaTeX transcription is:\n{latex}\n"
        "Verified differences between the original ({image_a}) and its rendering "
        "({image_b}):\n{diff}\n"
        "Revise the LaTeX so the differences disappear. Change only what the "
        "differences require and keep every correct part untouched. Output only "
        "the revised LaTeX code."
    )
    judge: str = (
        "{image_a} is a reference rendering and {image_b} is a candidate "
        "rendering. Rate how faithfully the candidate reproduces the reference "
        "on a scale from 0 (unrelated) to 10 (visually identical). Reply with a "
        "single number."
    )

    def format(self, role: str, **context: str) -> str:
        """Resolve the template for ``role``; every placeholder must bind."""
        template = getattr(self, role)
        try:
            return template.format(**context)
        except KeyError as exc:
            raise ConfigError(
                f"prompt template {role!r} needs placeholder {exc} "
                f"not supplied at this call site"
            ) from None


@dataclass(frozen=True)
class RenderOptions:
    dpi: float = 200.0
    timeout: float = 60.0

    def __post_init__(self) -> None:
        if self.dpi <= 0:
            raise ConfigError(f"render dpi must be positive, got {self.dpi}")
        if self.timeout <= 0:
            raise ConfigError(f"render timeout must be positive, got {self.timeout}")


@dataclass(frozen=True)
class RunConfig:
    """Everything a run needs beyond the dataset itself."""

    t_max: int = 2
    percentile: float = 75.0
    dilation_kernel: int = 3
    layer_range: Optional[tuple[int, int]] = None
    ablate_al_fv: bool = False
    strategy: str = "a2r2"
    n_samples: int = 8
    prompts: PromptTemplates = field(default_factory=PromptTemplates)
    backend_endpoint: str = "mock:?seed=0&errors=1"
    parallel_workers: int = 4
    seed: int = 0
    retry_attempts: int = 3
    retry_backoff: float = 0.5
    render: RenderOptions = field(default_factory=RenderOptions)
    save_overlays: bool = False

    def __post_init__(self) -> None:
        if self.t_max < 1:
            raise ConfigError(f"t_max must be >= 1, got {self.t_max}")
        if not (0 < self.percentile < 100):
            raise ConfigError(f"percentile must be in (0, 100), got {self.percentile}")
        if self.dilation_kernel < 1 or self.dilation_kernel % 2 == 0:
            raise ConfigError(
                f"dilation_kernel must be odd and >= 1, got {self.dilation_kernel}"
            )
        if self.layer_range is not None:
            start, end = self.layer_range
            if start > end:
                raise ConfigError(f"layer_range start {start} > end {end}")
        if self.strategy not in VALID_STRATEGIES:
            raise ConfigError(
                f"unknown strategy {self.strategy!r}; expected one of {VALID_STRATEGIES}"
            )
        if self.n_samples < 1:
            raise ConfigError(f"n_samples must be >= 1, got {self.n_samples}")
        if self.parallel_workers < 1:
            raise ConfigError(
                f"parallel_workers must be >= 1, got {self.parallel_workers}"
            )

    def replace(self, **changes) -> "RunConfig":
        from dataclasses import replace as _replace

        return _replace(self, **changes)


def _coerce(raw: str, current):
    """Coerce an override string toward the type of the value it replaces."""
    if isinstance(current, bool):
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"cannot parse boolean from {raw!r}")
    if isinstance(current, int) and not isinstance(current, bool):
        return int(raw)
    if isinstance(current, float):
        return float(raw)
    if current is None or isinstance(current, (tuple, list)):
        parsed = yaml.safe_load(raw)
        if isinstance(parsed, list):
            return tuple(parsed)
        return parsed
    return raw


def _config_to_dict(config: RunConfig) -> dict:
    out = {}
    for f in fields(RunConfig):
        value = getattr(config, f.name)
        if isinstance(value, PromptTemplates):
            value = {pf.name: getattr(value, pf.name) for pf in fields(PromptTemplates)}
        elif isinstance(value, RenderOptions):
            value = {rf.name: getattr(value, rf.name) for rf in fields(RenderOptions)}
        elif isinstance(value, tuple):
            value = list(value)
        out[f.name] = value
    return out


def _config_from_dict(data: dict) -> RunConfig:
    data = copy.deepcopy(data)
    known = {f.name for f in fields(RunConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if "prompts" in data and isinstance(data["prompts"], dict):
        base = PromptTemplates()
        merged = {
            pf.name: data["prompts"].get(pf.name, getattr(base, pf.name))
            for pf in fields(PromptTemplates)
        }
        extra = set(data["prompts"]) - {pf.name for pf in fields(PromptTemplates)}
        if extra:
            raise ConfigError(f"unknown prompt roles: {sorted(extra)}")
        data["prompts"] = PromptTemplates(**merged)
    if "render" in data and isinstance(data["render"], dict):
        data["render"] = RenderOptions(**data["render"])
    if data.get("layer_range") is not None:
        lr = data["layer_range"]
        if not (isinstance(lr, (list, tuple)) and len(lr) == 2):
            raise ConfigError(f"layer_range must be a [start, end] pair, got {lr!r}")
        data["layer_range"] = (int(lr[0]), int(lr[1]))
    try:
        return RunConfig(**data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path=None, overrides: Optional[list[str]] = None) -> RunConfig:
    """Build a RunConfig from an optional YAML file plus ``key=value`` overrides.

    Override keys use dots for nesting (``render.dpi=150``). Overrides win
    over file values; the environment variable A2R2_BACKEND_URL wins over the
    built-in endpoint default but not over an explicit file value or override.
    """
    data = _config_to_dict(RunConfig())
    env_url = os.environ.get("A2R2_BACKEND_URL")
    if env_url:
        data["backend_endpoint"] = env_url
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            loaded = yaml.safe_load(fh) or {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"config file {path} must contain a mapping")
        for key, value in loaded.items():
            if isinstance(value, dict) and isinstance(data.get(key), dict):
                data[key].update(value)
            else:
                data[key] = value
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, raw = item.split("=", 1)
        parts = key.strip().split(".")
        node = data
        for part in parts[:-1]:
            if part not in node or not isinstance(node[part], dict):
                raise ConfigError(f"unknown config key {key!r}")
            node = node[part]
        leaf = parts[-1]
        if leaf not in node:
            raise ConfigError(f"unknown config key {key!r}")
        node[leaf] = _coerce(raw, node[leaf])
    return _config_from_dict(data)


def dump_config(config: RunConfig, path) -> None:
    """Persist the effective configuration next to a run's outputs."""
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(_config_to_dict(config), fh, sort_keys=True)
