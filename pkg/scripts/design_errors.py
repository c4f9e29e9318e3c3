"""Error types shared by the design, bias and simulation modules"""


class DesignError(Exception):
    """Base class for every error raised by the design engine"""


class DomainError(DesignError, ValueError):
    """Inputs outside the region where the model is defined"""


class ContractError(DesignError, ValueError):
    """Arguments that are individually valid but used together incorrectly"""


class ResourceCapError(DesignError, RuntimeError):
    """A configured size or memory cap would be exceeded"""

    def __init__(self, message, cap=None, best=None):
        super().__init__(message)
        self.cap = cap
        self.best = best


class ConfigError(DesignError, ValueError):
    """Configuration file problems; keeps every offending key"""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("Invalid configuration: " + "; ".join(self.problems))
