"""In-house environments and a name registry."""

from hears.envs.base import Env, EnvState, SimulationError, StepResult, clip_action, wrap_angle
from hears.envs.gridnav import GridNav, MdpEnv
from hears.envs.hopper import HopperLite
from hears.envs.lander import Lander2D
from hears.envs.pendulum import PendulumSwingUp
from hears.envs.road import RoadProfile, SegmentSpec, generate_road
from hears.envs.tires import VehicleParams, tire_lateral_force
from hears.envs.vehicle import BicycleVehicle, VehicleTaskConfig, vehicle_base_reward

REGISTRY = {
    "gridnav": GridNav,
    "pendulum": PendulumSwingUp,
    "lander": Lander2D,
    "hopper": HopperLite,
    "vehicle": BicycleVehicle,
}


def make_env(name: str, **kwargs):
    try:
        cls = REGISTRY[name]
    except KeyError:
        raise KeyError(f"unknown environment {name!r}; choose from {sorted(REGISTRY)}") from None
    return cls(**kwargs)


__all__ = [
    "REGISTRY", "BicycleVehicle", "Env", "EnvState", "GridNav", "HopperLite", "Lander2D", "MdpEnv",
    "PendulumSwingUp", "RoadProfile", "SegmentSpec", "SimulationError", "StepResult", "VehicleParams",
    "VehicleTaskConfig", "clip_action", "generate_road", "make_env", "tire_lateral_force",
    "vehicle_base_reward", "wrap_angle",
]
