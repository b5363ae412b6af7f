from .run_config import RunConfig, load_run_config, parse_run_config
from .patchnorm_cli import cli
