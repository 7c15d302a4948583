"""Simulation and stability analysis of k-station cascade queues."""
from .model import Event, Station, SystemConfig, SystemState, subsystem
from .record import TrajectoryRecord
from .simulate import Simulation, replicate, run
from .stability import backward_induction, classify, classify_two_station, rho_tilde
from .variates import DistributionSpec, check_spread_out, make_stream, rate_of

__all__ = [
    "DistributionSpec", "Event", "Simulation", "Station", "SystemConfig", "SystemState",
    "TrajectoryRecord", "backward_induction", "check_spread_out", "classify", "classify_two_station",
    "make_stream", "rate_of", "replicate", "rho_tilde", "run", "subsystem",
]
__version__ = "0.1.0"
