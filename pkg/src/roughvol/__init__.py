"""Nonparametric test for rough volatility from high-frequency prices."""

__version__ = "0.1.0"

from .core import (  # noqa: E402
    BlockGrid,
    GridSpec,
    Heston,
    JumpModel,
    LaggedBlocks,
    NoiseModel,
    PricePath,
    RoughHeston,
    SameTimeOfDay,
    SimScenario,
    TestReport,
    TradingDay,
    TuningSpec,
    jump_scale_from,
    normal_quantile,
    rng_stream,
    design_scenario,
)
from .estimator import BlockSpotVariance, RoughVolatilityTest  # noqa: E402
from .roughtest import run_test  # noqa: E402

__all__ = [
    "BlockGrid", "BlockSpotVariance", "GridSpec", "Heston", "JumpModel", "LaggedBlocks",
    "NoiseModel", "PricePath", "RoughHeston", "RoughVolatilityTest", "SameTimeOfDay",
    "SimScenario", "TestReport", "TradingDay", "TuningSpec", "jump_scale_from",
    "normal_quantile", "rng_stream", "run_test", "design_scenario",
]
