from .config import ConfigError, RunConfig, ScenarioBinding, load_config, parse_config
from .csvio import (OBS_COLUMNS, SAT_COLUMNS, TRUTH_COLUMNS, CsvRowError, SchemaError, TruthRecord,
                    read_obs_csv, read_sats_csv, read_truth_csv, write_obs_csv, write_sats_csv, write_truth_csv)
from .rinex import (MalformedHeader, MalformedRecord, ObsFileHeader, RinexError, TruncatedEpoch, UnknownVersion,
                    parse_rinex_obs, write_rinex_obs)

__all__ = [
    "ConfigError", "RunConfig", "ScenarioBinding", "load_config", "parse_config",
    "OBS_COLUMNS", "SAT_COLUMNS", "TRUTH_COLUMNS", "CsvRowError", "SchemaError", "TruthRecord",
    "read_obs_csv", "read_sats_csv", "read_truth_csv", "write_obs_csv", "write_sats_csv", "write_truth_csv",
    "MalformedHeader", "MalformedRecord", "ObsFileHeader", "RinexError", "TruncatedEpoch", "UnknownVersion",
    "parse_rinex_obs", "write_rinex_obs",
]
