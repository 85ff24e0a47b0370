"""Crowdsourced on-time package delivery by hitchhiking taxi rides."""
from .model import (
    CrowdExpressError,
    DataError,
    GeoPoint,
    PackageJob,
    PackageRequest,
    Station,
    TaxiOrderingRequest,
    TimeSlotScheme,
    TrajectoryRecord,
    TransportNetwork,
    TravelTimePMF,
    slot_of,
)
from .network import NetworkBuildConfig, ReferencePathTable, build_network, reference_paths
from .prob import PathProbQuery, brute_force_max_prob, max_prob, path_prob
from .scheduler import Action, Decision, Policy, decide, decide_maxprob
from .simulator import SimulationReport, WorkloadSpec, replay, sweep

__version__ = "0.1.0"

__all__ = [
    "Action", "CrowdExpressError", "DataError", "Decision", "GeoPoint", "NetworkBuildConfig",
    "PackageJob", "PackageRequest", "PathProbQuery", "Policy", "ReferencePathTable",
    "SimulationReport", "Station", "TaxiOrderingRequest", "TimeSlotScheme", "TrajectoryRecord",
    "TransportNetwork", "TravelTimePMF", "WorkloadSpec", "brute_force_max_prob",
    "build_network", "decide", "decide_maxprob", "max_prob", "path_prob", "reference_paths",
    "replay", "slot_of", "sweep",
]
