import numpy as np
import pytest

from probe_lpr.config import PolarConfig
from probe_lpr.descriptor import Descriptor, make_descriptor, marginalize_occupancy
from probe_lpr.synth import SceneSpec, generate_scene

_ACCEPTANCE = []


@pytest.fixture
def cfg():
    return PolarConfig()


@pytest.fixture(scope="session")
def scene_cloud():
    return generate_scene(SceneSpec(seed=7))


@pytest.fixture(scope="session")
def scene_descriptor(scene_cloud):
    return make_descriptor(scene_cloud)


def random_descriptor(rng, cfg=None, density=0.3):
    """Descriptor from a random occupancy grid with random positive heights."""
    cfg = cfg or PolarConfig()
    O = (rng.random((cfg.R, cfg.S)) < density).astype(np.uint8)
    O[rng.integers(cfg.R), rng.integers(cfg.S)] = 1
    G = O * rng.uniform(0.1, 10.0, O.shape)
    return Descriptor.from_grids(G, O, marginalize_occupancy(O, cfg), cfg)


@pytest.fixture
def acceptance():
    """Record one pass/fail line per acceptance criterion."""
    def record(cid, passed, detail):
        _ACCEPTANCE.append((cid, bool(passed), detail))
        print(f"[{cid}] {'PASS' if passed else 'FAIL'}: {detail}")
    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for cid, passed, detail in _ACCEPTANCE:
        terminalreporter.write_line(f"{cid}: {'PASS' if passed else 'FAIL'}  {detail}")


_LOOPS = {}


def loop_descriptors(cfg=None, **kwargs):
    """Descriptors and trajectory for a synthetic two-pass loop (cached)."""
    from probe_lpr.synth import loop_sequence

    cfg = cfg or PolarConfig()
    key = (cfg, tuple(sorted((k, repr(v)) for k, v in kwargs.items())))
    if key not in _LOOPS:
        seq = loop_sequence(**kwargs)
        _LOOPS[key] = ([make_descriptor(c, cfg) for c in seq.clouds], seq.trajectory)
    return _LOOPS[key]
