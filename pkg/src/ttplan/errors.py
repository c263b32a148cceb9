"""Exception hierarchy shared by all planner modules."""


class PlannerError(Exception):
    """Base class for every error raised by ttplan."""


class DomainError(PlannerError, ValueError):
    """Argument outside the domain of a path or model function."""


class ModelDomainError(DomainError):
    """State violates the validity conditions of the road-aligned model."""


class ProjectionError(DomainError):
    """Point cannot be projected uniquely onto the reference path."""


class InfeasibleCorridorError(PlannerError):
    """The free lateral interval at some station is empty."""


class ConfigurationError(PlannerError):
    """Inconsistent objective / planner configuration."""


class ScenarioError(PlannerError):
    """Scenario document violates the schema or a named invariant."""

    def __init__(self, message, field=None, line=None):
        self.field = field
        self.line = line
        where = []
        if field:
            where.append(f"field '{field}'")
        if line is not None:
            where.append(f"line {line}")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)
