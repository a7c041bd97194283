from .config import ConfigError, ScenarioConfig

__all__ = ["ConfigError", "ScenarioConfig"]
