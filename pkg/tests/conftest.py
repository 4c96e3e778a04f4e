import os
from functools import lru_cache
from pathlib import Path

import numpy as np
import pytest

from feketelab.bergman import build_section_space
from feketelab.fekete import solve_level
from feketelab.geometry import Weight

# Fekete solves are deterministic; caching them only saves time
CACHE = Path(os.environ.get("FEKETELAB_CACHE", Path(__file__).resolve().parents[1] / ".cache"))

FS1 = Weight.fubini_study(1)
FS2 = Weight.fubini_study(2)
PERT = Weight.example_perturbed()


@lru_cache(maxsize=None)
def space(w_key, k):
    return build_section_space(WEIGHTS[w_key], k)


@lru_cache(maxsize=None)
def fekete(w_key, k):
    return solve_level(WEIGHTS[w_key], k, cache_dir=CACHE)


WEIGHTS = {"fs1": FS1, "fs2": FS2, "pert": PERT}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def cache_dir():
    return CACHE


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get("criteria", {}) if hasattr(config, "stash") else {}
    if lines:
        terminalreporter.section("acceptance criteria")
        for i in sorted(lines):
            terminalreporter.write_line(lines[i])
