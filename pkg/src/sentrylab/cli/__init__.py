from .config import RunConfig, dump_config, load_config, parse_text
from .main import execute, main

__all__ = ["RunConfig", "dump_config", "execute", "load_config", "main", "parse_text"]
