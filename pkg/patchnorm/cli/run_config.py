"""
JSON run configuration shared by the CLI subcommands and the comparison pipeline.
"""
import json
from pathlib import Path
from typing import Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from ..config import get_settings
from ..errors import ConfigurationError
from ..harness import DataConfig, DomainSuite, TrainConfig
from ..scheme import SchemeConfig


class RunConfig(BaseModel):
    """One experiment: data, training, scheme, evaluation suite and output directory"""

    model_config = ConfigDict(extra="forbid", frozen=True)

    data: DataConfig = Field(default_factory=DataConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    scheme: SchemeConfig = Field(default_factory=SchemeConfig)
    suite: DomainSuite = Field(default_factory=DomainSuite)
    output_dir: str = Field(default_factory=lambda: get_settings().output_dir,
                            description="Artifact directory when --out is not given (default: PATCHNORM_OUTPUT_DIR)")


def format_validation_error(error: ValidationError) -> str:
    """One 'field.path: message' line per failing field"""
    lines = []
    for item in error.errors():
        location = ".".join(str(part) for part in item["loc"]) or "<root>"
        lines.append(f"{location}: {item['msg']}")
    return "\n".join(lines)


def parse_run_config(document: dict) -> RunConfig:
    try:
        return RunConfig.model_validate(document)
    except ValidationError as e:
        raise ConfigurationError(format_validation_error(e)) from e


def load_run_config(path: Union[str, Path]) -> RunConfig:
    """
    Read and validate a JSON run config.

    Raises:
        ConfigurationError: Missing file, malformed JSON, or field-level validation failures
    """
    path = Path(path)
    try:
        document = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as e:
        raise ConfigurationError(f"Config file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"{path}: invalid JSON ({e})") from e
    if not isinstance(document, dict):
        raise ConfigurationError(f"{path}: top level must be a JSON object")
    return parse_run_config(document)
