import math
from importlib import resources

import pytest

from pzplan.gnss import Constellation, GnssEnvironment, load_almanac, load_scene, scene_from_dict
from pzplan.models import NoiseConfig
from pzplan.planner import GnssScheduler, PlannerConfig, build_graph, explore

DATA = resources.files("pzplan") / "data"
EPOCH = 345600.0
DEMO_START = (0.0, 0.0, 0.0)
DEMO_GOAL = (400.0, 400.0, math.pi / 2)


def open_scene(altitude=65.0, buildings=(), size=400.0):
    return scene_from_dict(
        {"altitude": altitude, "bounds": [[0, size], [0, size]], "buildings": [dict(b) for b in buildings]}
    )


def box(x0, y0, x1, y1, height=200.0):
    return {"footprint": [[x0, y0], [x1, y0], [x1, y1], [x0, y1]], "height": height}


@pytest.fixture(scope="session")
def constellation():
    return Constellation(load_almanac(DATA / "demo_almanac.alm"))


@pytest.fixture(scope="session")
def planner_cfg():
    return PlannerConfig(epoch=EPOCH)


@pytest.fixture(scope="session")
def demo_scene():
    return load_scene(DATA / "demo_scene.json")


@pytest.fixture(scope="session")
def demo_env(demo_scene, constellation):
    return GnssEnvironment(demo_scene, constellation)


@pytest.fixture(scope="session")
def demo_graph(demo_scene, planner_cfg):
    return build_graph(demo_scene, planner_cfg)


@pytest.fixture(scope="session")
def open_world(constellation, planner_cfg):
    """Obstacle-free 400 m square: 5 x 5 grid, four headings per node."""
    scene = open_scene()
    env = GnssEnvironment(scene, constellation)
    return scene, env, build_graph(scene, planner_cfg)


@pytest.fixture(scope="session")
def demo_plan(demo_graph, demo_env, demo_scene, planner_cfg):
    """Corner-to-corner plan through the demo scene; shared by the slower tests."""
    sched = GnssScheduler(demo_env, NoiseConfig())
    res = explore(
        demo_graph, demo_graph.node_id(DEMO_START), demo_graph.node_id(DEMO_GOAL), sched, demo_scene.obstacles(), planner_cfg
    )
    assert res.success, res.reason
    return res.plan
