"""Opt-in check against a real OpenAI-compatible chat endpoint.

Runs only when all three variables are set:

    FLOORPLAN_NAV_LIVE_ENDPOINT   e.g. https://api.example.com/v1/chat/completions
    FLOORPLAN_NAV_LIVE_MODEL      model name accepted by that endpoint
    FLOORPLAN_NAV_API_KEY         bearer token

    pytest -m live tests/test_live.py
"""

import os

import pytest

from floorplan_nav.backends import BackendConfig, MockContext, query
from floorplan_nav.graph import NavTask, build_connectivity
from floorplan_nav.prompts import PromptSpec, build_prompt
from floorplan_nav.render import render_png
from floorplan_nav.validate import evaluate_response

LIVE_VARS = ("FLOORPLAN_NAV_LIVE_ENDPOINT", "FLOORPLAN_NAV_LIVE_MODEL", "FLOORPLAN_NAV_API_KEY")

pytestmark = [
    pytest.mark.live,
    pytest.mark.skipif(not all(os.environ.get(v) for v in LIVE_VARS),
                       reason="live endpoint not configured: set " + ", ".join(LIVE_VARS)),
]


def test_real_endpoint_answers_with_a_judgeable_plan(map1):
    backend = BackendConfig("http_chat", endpoint=os.environ["FLOORPLAN_NAV_LIVE_ENDPOINT"],
                            model=os.environ["FLOORPLAN_NAV_LIVE_MODEL"], credential_env="FLOORPLAN_NAV_API_KEY",
                            max_retries=2, timeout=120.0)
    graph = build_connectivity(map1)
    task = NavTask("map1", "Terrasse Couverte", "Chambre 1", "hard")
    prompt = build_prompt(PromptSpec(task.start_room, task.goal_room, image=render_png(map1)))
    transcript = query(backend, prompt, context=MockContext(graph, task))
    assert transcript.error_kind is None, transcript.error_detail
    _, verdict = evaluate_response(graph, task, transcript.response_text)
    # any verdict is acceptable; the point is that the round trip works end to end
    assert verdict.outcome
