"""
Critique Agent
Critic backends and the self-reflection loop
"""

from core.critique.agent import (
    ReflectResult,
    RoundRecord,
    critique_views,
    filter_frames,
    merge_regions,
    parse_regions,
    reflect_loop,
    regions_by_view,
    render_views,
    select_round,
)
from core.critique.critic import (
    CriticEndpoint,
    CritiqueRegion,
    CritiqueReport,
    HttpCritic,
    Label,
    OpenAICompatibleCritic,
    PromptRole,
    ScriptedCritic,
    load_prompt,
    make_critic,
)

__all__ = [
    "CriticEndpoint",
    "CritiqueRegion",
    "CritiqueReport",
    "HttpCritic",
    "Label",
    "OpenAICompatibleCritic",
    "PromptRole",
    "ReflectResult",
    "RoundRecord",
    "ScriptedCritic",
    "critique_views",
    "filter_frames",
    "load_prompt",
    "make_critic",
    "merge_regions",
    "parse_regions",
    "reflect_loop",
    "regions_by_view",
    "render_views",
    "select_round",
]
