import json
import tomllib
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from sdk.errors import ConfigError


class Settings(BaseSettings):
    model_config = SettingsConfigDict(env_prefix="AGFA_", env_file=".env", extra="ignore")

    data_dir: Path = Path("data")
    log_file: Path = Path("logs/agfa.log")
    log_level: str = "INFO"


settings = Settings()

Method = Literal[
    "agfa",
    "erm",
    "erm_swad",
    "amp_mixup",
    "agfa_unsup_mcd",
    "agfa_no_mixup",
    "agfa_no_swad",
    "agfa_pixel_gen",
]
METHODS: tuple[str, ...] = Method.__args__


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class SwadConfig(_Section):
    enabled: bool | None = None  # None: the method decides
    n_s: int = Field(3, ge=1)
    n_e: int = Field(6, ge=1)
    r: float = Field(1.3, gt=1.0)


class DataConfig(_Section):
    dataset: Literal["glyphs", "rotated_mnist", "colored_mnist"] = "glyphs"
    target: int = Field(0, ge=0)
    protocol: Literal["leave_one_out", "single_source"] = "leave_one_out"
    val_frac: float = Field(0.2, gt=0.0, lt=1.0)
    samples_per_domain: int = Field(500, ge=2)
    angles: list[float] = [0.0, 15.0, 30.0, 45.0, 60.0, 75.0]
    correlations: list[float] = [0.1, 0.2, 0.9]
    glyph_classes: int = Field(10, ge=2, le=10)
    glyph_domains: int = Field(3, ge=2)
    mnist_dir: Path | None = None  # defaults to <AGFA_DATA_DIR>/mnist
    cache: bool = False
    seed: int = 0

    @model_validator(mode="after")
    def _check_correlations(self):
        if any(not 0.0 < c < 1.0 for c in self.correlations):
            raise ValueError(f"correlations must lie in (0, 1), got {self.correlations}")
        return self


class ModelConfig(_Section):
    extractor: Literal["mlp", "convnet"] = "mlp"
    hidden: list[int] = [256, 256]
    feature_dim: int = Field(128, ge=1)
    conv_channels: list[int] = [16, 32, 32, 32]
    image_size: int = Field(32, ge=2)
    channels: int | None = Field(None, ge=1)  # None: the dataset's native channel count


class AugmentConfig(_Section):
    hflip: bool = True
    rotate_deg: float = Field(0.0, ge=0.0)
    color_jitter: float = Field(0.0, ge=0.0, le=1.0)


class GeneratorConfig(_Section):
    noise_dim: int = Field(100, ge=1)
    hidden_units: int = Field(0, ge=0)


class TrainConfig(_Section):
    method: Method = "agfa"
    eta: float = Field(0.1, ge=0.0)
    alpha_conf: float = Field(1.96, ge=0.0)
    alpha_mix: float = Field(0.5, ge=0.0, le=1.0)
    mcd_ranking: Literal["anchor", "literal"] = "anchor"
    learning_rate: float = Field(5e-5, gt=0.0)
    adam_beta1: float = Field(0.9, ge=0.0, lt=1.0)
    adam_beta2: float = Field(0.999, ge=0.0, lt=1.0)
    adam_eps: float = Field(1e-8, gt=0.0)
    batch_per_domain: int = Field(16, ge=1)
    n_mc: int = Field(50, ge=1)
    max_iters: int = Field(2000, ge=1)
    val_every: int = Field(50, ge=1)
    seed: int = 0

    swad: SwadConfig = SwadConfig()
    data: DataConfig = DataConfig()
    model: ModelConfig = ModelConfig()
    augment: AugmentConfig = AugmentConfig()
    generator: GeneratorConfig = GeneratorConfig()

    @property
    def swad_enabled(self) -> bool:
        if self.swad.enabled is not None:
            return self.swad.enabled
        return self.method not in ("erm", "amp_mixup", "agfa_no_swad")

    def echo(self) -> str:
        """Byte-stable JSON rendering of the resolved config."""
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, indent=2)


def parse_value(raw: str):
    """TOML scalar or array; anything unparsable is taken as a bare string."""
    try:
        return tomllib.loads(f"value = {raw}")["value"]
    except tomllib.TOMLDecodeError:
        return raw.strip()


def apply_override(data: dict, assignment: str) -> dict:
    key, sep, raw = assignment.partition("=")
    key = key.strip()
    if not sep or not key:
        raise ConfigError(f"override must look like key=value, got '{assignment}'")
    *sections, leaf = key.split(".")
    node = data
    for section in sections:
        child = node.setdefault(section, {})
        if not isinstance(child, dict):
            raise ConfigError(f"override '{key}': '{section}' is not a section")
        node = child
    node[leaf] = parse_value(raw)
    return data


def build_config(data: dict, overrides: list[str] | None = None) -> TrainConfig:
    for assignment in overrides or []:
        apply_override(data, assignment)
    try:
        return TrainConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"invalid configuration: {e}") from e


def load_config(path: str | Path | None, overrides: list[str] | None = None) -> TrainConfig:
    data: dict = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            data = tomllib.loads(path.read_text(encoding="utf-8"))
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"cannot parse {path}: {e}") from e
    return build_config(data, overrides)
