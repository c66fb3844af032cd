"""Urban GNSS environment: almanac, scene, ray tracing, multipath and noise models."""

from .almanac import (
    AlmanacError,
    AlmanacRecord,
    Constellation,
    format_yuma,
    load_almanac,
    orbital_plane_position,
    parse_yuma,
    sat_position,
)
from .geometry import ecef_to_enu, elevation_azimuth, enu_rotation, geodetic_to_ecef
from .measurements import (
    GnssEnvironment,
    SatelliteView,
    UniformPerEpoch,
    WorstCaseConstant,
    ZeroBias,
    make_bias_policy,
    pseudorange_noise_var,
    simulate_measurements,
)
from .multipath import CA_CHIP_LENGTH, MultipathEnvelope, multipath_bias_bound
from .raytrace import Signal, SignalKind, classify_signal
from .scene import Building, SceneError, UrbanScene, decompose_convex, load_scene, scene_from_dict

__all__ = [
    "AlmanacError",
    "AlmanacRecord",
    "Building",
    "CA_CHIP_LENGTH",
    "Constellation",
    "GnssEnvironment",
    "MultipathEnvelope",
    "SatelliteView",
    "SceneError",
    "Signal",
    "SignalKind",
    "UniformPerEpoch",
    "UrbanScene",
    "WorstCaseConstant",
    "ZeroBias",
    "classify_signal",
    "decompose_convex",
    "ecef_to_enu",
    "elevation_azimuth",
    "enu_rotation",
    "format_yuma",
    "geodetic_to_ecef",
    "load_almanac",
    "load_scene",
    "make_bias_policy",
    "multipath_bias_bound",
    "orbital_plane_position",
    "parse_yuma",
    "pseudorange_noise_var",
    "sat_position",
    "scene_from_dict",
    "simulate_measurements",
]
