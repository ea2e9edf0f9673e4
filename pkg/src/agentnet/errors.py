"""Exception base shared by every module."""


class AgentNetError(Exception):
    """Root of all errors raised by agentnet."""
