"""Secondary frequency control toolbox for an islanded wind/PV/diesel/battery
microgrid: constrained receding-horizon control with disturbance estimation,
capacity-allocated PI baselines, and a deterministic scenario simulator."""

from .lfc_model import MicrogridParams, build_plant
from .mpc import MpcConfig
from .simulate import RunConfig, compute_metrics, make_scenario, run_scenario

__all__ = [
    "MicrogridParams",
    "MpcConfig",
    "RunConfig",
    "build_plant",
    "compute_metrics",
    "make_scenario",
    "run_scenario",
]

__version__ = "0.1.0"
