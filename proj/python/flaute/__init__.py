"""Python access to the flaute core: capacity factors, Dunkelflaute detection,
quantile mapping, statistics and the command pipeline."""

import json as _json

from ._flaute import (  # noqa: F401
    FlauteError,
    QuantileMap,
    __version__,
    coarsen,
    command_names,
    detect_events,
    ensemble_stats,
    fit_quantile_map,
    load_gridpack,
    log_law_factor,
    mask_from_polygon,
    pv_capacity_factor,
    rolling_decadal,
    rolling_mean,
    save_gridpack,
    sha256_hex,
    technology_shares_2024,
    trend_test,
    wind_power_curve,
)
from . import _flaute


def default_config(command):
    """Every option of `command` with its default value."""
    return _json.loads(_flaute.default_config(command))


def run(command, **options):
    """Run a pipeline command. Options use the config-file keys (snake_case);
    path values may be `os.PathLike`. Returns the provenance record."""
    cfg = {k: (str(v) if hasattr(v, "__fspath__") else v) for k, v in options.items()}
    return _json.loads(_flaute.run_command(command, _json.dumps(cfg)))
