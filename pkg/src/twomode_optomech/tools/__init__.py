from .config_parser import RunConfig, load_config, parse_config, serialize_config
from .sweep_writer import emit_sweep, figure_filename

__all__ = [
    "RunConfig",
    "parse_config",
    "serialize_config",
    "load_config",
    # Output
    "emit_sweep",
    "figure_filename",
]
