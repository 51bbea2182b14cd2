from .channel import (
    ChannelSet,
    IcChannel,
    MultiCellChannelSet,
    UserChannel,
    apply_csit_error,
    csit_sample,
    gen_multicell,
    gen_rayleigh,
    geometry_2user,
)
from .metric import Metric
from .optimize import (
    OptimizerConfig,
    ergodic_average,
    evaluate_metric,
    optimize,
    optimize_powers_fixed_directions,
    optimize_precoders_refine,
    rate_region_boundary,
)
from .schemes import PrecoderSet, StreamLayout, build_layout, evaluate
from .runner import run
from .cli import main
from .utils import (
    ConfigError,
    DegenerateChannelError,
    NumericalError,
    ParameterError,
    dbm_to_watt,
)
from .version import __version__


__all__ = (
    "ChannelSet",
    "IcChannel",
    "MultiCellChannelSet",
    "UserChannel",
    "apply_csit_error",
    "csit_sample",
    "gen_multicell",
    "gen_rayleigh",
    "geometry_2user",
    "Metric",
    "OptimizerConfig",
    "ergodic_average",
    "evaluate_metric",
    "optimize",
    "optimize_powers_fixed_directions",
    "optimize_precoders_refine",
    "rate_region_boundary",
    "PrecoderSet",
    "StreamLayout",
    "build_layout",
    "evaluate",
    "run",
    "main",
    "ConfigError",
    "DegenerateChannelError",
    "NumericalError",
    "ParameterError",
    "dbm_to_watt",
    "__version__",
)
