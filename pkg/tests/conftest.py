import json
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from brachysim.plan import parse_plan


def make_plan_doc(needles=None, **extra):
    doc = {"version": 1}
    if needles is not None:
        doc["needles"] = needles
    doc.update(extra)
    return doc


def needle(id="n1", grid=(6, 6), depth=20.0, speed=5.0, rotation=None, seeds=1, **kw):
    profile = {"speed": speed}
    if rotation is not None:
        profile["rotation"] = rotation
    doc = {"id": id, "target": {"grid": list(grid)}, "depth": depth, "profile": profile,
           "seeds": [{"offset_from_tip": 0.0}] * seeds}
    doc.update(kw)
    return doc


@pytest.fixture
def one_needle_plan():
    return parse_plan(json.dumps(make_plan_doc([needle()])))


@pytest.fixture
def three_needle_plan():
    return parse_plan(json.dumps(make_plan_doc([
        needle(id="n1", grid=(6, 6), depth=20.0),
        needle(id="n2", grid=(2, 4), depth=30.0, rotation={"mode": "continuous", "omega": 10.0}),
        needle(id="n3", grid=(10, 8), depth=25.0, seeds=2),
    ])))
