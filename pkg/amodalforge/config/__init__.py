from amodalforge.config.config import GenerationConfig, IntraClass, InterClass, ConfigError, load_config, default_workers, MODES
