"""Quantized LDPC decoding on quasi-synchronous hardware: decoder, density
evolution with deviation channels, a timing-level test circuit and
per-iteration operating-condition optimization."""

__version__ = "0.1.0"

from .channel_code import (  # noqa: E402
    BiawgnChannel,
    CodewordSampler,
    QuantizedAlphabet,
    RegularEnsemble,
    TannerGraph,
    build_regular_code,
    pe_to_sigma,
    sigma_to_pe,
)
from .density_evolution import DEConfig, run_de, threshold_search  # noqa: E402
from .deviation import DeviationModel, characterize  # noqa: E402
from .gearshift import DESystem, Objective, TrellisConfig, optimize  # noqa: E402
from .oms_decoder import DecoderConfig, decode  # noqa: E402
from .timing_circuit import DEFAULT_PROFILE, CircuitProfile, OperatingCondition, TestCircuit  # noqa: E402

__all__ = [
    "BiawgnChannel",
    "CircuitProfile",
    "CodewordSampler",
    "DEConfig",
    "DEFAULT_PROFILE",
    "DESystem",
    "DecoderConfig",
    "DeviationModel",
    "Objective",
    "OperatingCondition",
    "QuantizedAlphabet",
    "RegularEnsemble",
    "TannerGraph",
    "TestCircuit",
    "TrellisConfig",
    "build_regular_code",
    "characterize",
    "decode",
    "optimize",
    "pe_to_sigma",
    "run_de",
    "sigma_to_pe",
    "threshold_search",
]
