"""Reasoners, prompt templates and the agent decision loops."""
from .loops import (
    AgentError, DecisionLog, LogEntry, NoSamples, PlanRejected, cc_agent_evaluate, fuse_reports,
    ra_agent_evaluate, render_schemes, render_stats, sfc_agent_plan, validate_plan,
)
from .prompts import (
    CC_TEMPLATE, RA_TEMPLATE, SFC_TEMPLATE, TEMPLATES, MissingValue, PromptTemplate, TemplateError,
    UndeclaredPlaceholder,
)
from .reasoners import (
    HttpReasoner, Reasoner, ReasonerError, ReasonerUnavailable, RecordingReasoner, ScriptExhausted,
    ScriptedReasoner, load_script, reasoner_scripted, transcript_script,
)

__all__ = [
    "AgentError", "CC_TEMPLATE", "DecisionLog", "HttpReasoner", "LogEntry", "MissingValue", "NoSamples",
    "PlanRejected", "PromptTemplate", "RA_TEMPLATE", "Reasoner", "ReasonerError", "ReasonerUnavailable",
    "RecordingReasoner", "SFC_TEMPLATE", "ScriptExhausted", "ScriptedReasoner", "TEMPLATES", "TemplateError",
    "UndeclaredPlaceholder", "cc_agent_evaluate", "fuse_reports", "load_script", "ra_agent_evaluate",
    "reasoner_scripted", "render_schemes", "render_stats", "sfc_agent_plan", "transcript_script",
    "validate_plan",
]
