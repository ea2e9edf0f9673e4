"""Prompt templates for the CC, SFC and RA agents."""
from __future__ import annotations

import re
from dataclasses import dataclass

from ..errors import AgentNetError

PLACEHOLDER = re.compile(r"\{([A-Z][A-Z0-9_]*)\}")
KNOWN_PLACEHOLDERS = ("IFA_REPORT", "NF_CATALOG", "RA_REPORT", "CURRENT_WEIGHTS", "STATS_24H", "CC_SCHEMES")


class TemplateError(AgentNetError, ValueError):
    pass


class UndeclaredPlaceholder(TemplateError):
    pass


class MissingValue(TemplateError):
    pass


def _neutral(value: str) -> str:
    # inserted text must not smuggle in new placeholder markers
    return str(value).replace("{", "(").replace("}", ")")


@dataclass(frozen=True)
class PromptTemplate:
    id: str
    system: str
    steps: int
    placeholders: tuple[str, ...]

    def __post_init__(self):
        used = set(PLACEHOLDER.findall(self.system))
        extra = used - set(self.placeholders)
        if extra:
            raise UndeclaredPlaceholder(f"{self.id}: undeclared placeholders {sorted(extra)}")
        if "{" in PLACEHOLDER.sub("", self.system) or "}" in PLACEHOLDER.sub("", self.system):
            raise TemplateError(f"{self.id}: stray brace outside a placeholder")
        found = len(re.findall(r"^STEP \d+ ", self.system, re.M))
        if found != self.steps:
            raise TemplateError(f"{self.id}: declares {self.steps} steps, text has {found}")

    def instantiate(self, **values) -> str:
        missing = [p for p in self.placeholders if p not in values]
        if missing:
            raise MissingValue(f"{self.id}: no value for {', '.join(missing)}")
        text = PLACEHOLDER.sub(lambda m: _neutral(values[m.group(1)]), self.system)
        assert "{" not in text
        return text


CC_SYSTEM = """\
ROLE: congestion control agent for one end-to-end flow.
GOAL: keep throughput high and loss and delay low for the application described below.

#Inputs
IFA report:
{IFA_REPORT}

Available congestion control schemes (and tunable parameters):
{CC_SCHEMES}

#Reasoning
STEP 1 Summarize the application targets and the environment.
STEP 2 Compare the observed metrics with the targets.
STEP 3 Describe how the current scheme behaves on this path.
STEP 4 List the weaknesses of the current scheme here.
STEP 5 List the properties a better scheme would need.
STEP 6 Check whether an available scheme, or a retuned one, has them.
STEP 7 Estimate the effect of each option on the metrics.
STEP 8 Pick one option and justify it.

#Options
a = keep the current scheme and parameters
b = keep the scheme, change parameters
c = switch to another available scheme
d = generate a new scheme

#Output Format
First line: DECISION: <a|b|c|d>
For b: PARAMS: name=value name=value ...
For c: SCHEME: <scheme name>
For d: a block opened by a line ```ccspec and closed by a line ```, with lines
name=llm_cc_v<i>, additive_increase=<1..10>, beta=<0.5..0.95>, rtt_threshold=<1.05..3>,
pacing_gain=<0.5..2 or 0 for none>, rtt_sensitivity=<0..1>
Then: RATIONALE: <one line>
Then: STEP 1: <summary> ... STEP 8: <summary>
"""

SFC_SYSTEM = """\
ROLE: SFC and protocol design agent.
GOAL: build a deployable chain of network functions and a transport for the application below.

#Inputs
IFA report:
{IFA_REPORT}

NF catalog:
{NF_CATALOG}

RA report (candidate paths):
{RA_REPORT}

#Reasoning
STEP 1 Identify the application and its traffic classes.
STEP 2 Derive quantitative requirements per class.
STEP 3 Select the network functions the chain needs.
STEP 4 Check whether a legacy transport satisfies the requirements.
STEP 5 Identify gaps the catalog does not cover.
STEP 6 Decide on new NFs or a custom in-chain protocol.
STEP 7 Predict delivery, latency and completion time.
STEP 8 Choose a candidate path and a node for every NF.
STEP 9 Emit the chain and protocol as a deployable plan.

#Options
a = catalog NFs with a legacy protocol
b = catalog NFs with a custom protocol
c = new NFs with a legacy protocol
d = catalog and/or new NFs with a custom protocol

#Output Format
A block opened by a line ```sfcplan and closed by a line ```, containing
protocol=<legacy-udp|legacy-tcp|custom>
path=<candidate path index>
nf.<position>=<NF name> @ <node> | key=value ...
newnf.<name>=behavior=<kind> in=<formats> out=<formats> cpu=<n> mem=<MB>
notes=<one line>
Then: STEP 1: <summary> ... STEP 9: <summary>
"""

RA_SYSTEM = """\
ROLE: resource allocation agent for SFC embedding.
GOAL: retune the objective weights a1 (cost), a2 (profit), a3 (utilization and fairness) and a4 (green
penalty) that rank placement candidates.

#Inputs
Current weights:
{CURRENT_WEIGHTS}

Statistics of the last 24 h:
{STATS_24H}

#Reasoning
STEP 1 Relate the current weights to the observed statistics.
STEP 2 Rank the metrics by how critical they are now.
STEP 3 Propose new weights that favor the critical metrics.

#Output Format
First line: WEIGHTS: a1=<f> a2=<f> a3=<f> a4=<f>
Then: RATIONALE: <one line>
Then: STEP 1: <summary> ... STEP 3: <summary>
"""

CC_TEMPLATE = PromptTemplate("cc-agent", CC_SYSTEM, 8, ("IFA_REPORT", "CC_SCHEMES"))
SFC_TEMPLATE = PromptTemplate("sfc-agent", SFC_SYSTEM, 9, ("IFA_REPORT", "NF_CATALOG", "RA_REPORT"))
RA_TEMPLATE = PromptTemplate("ra-agent", RA_SYSTEM, 3, ("CURRENT_WEIGHTS", "STATS_24H"))
TEMPLATES = {t.id: t for t in (CC_TEMPLATE, SFC_TEMPLATE, RA_TEMPLATE)}
