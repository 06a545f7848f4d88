from typing import Any, List, Optional


class TownSimulationException(Exception):
    """
    Exception class for the town simulation.
    """

    pass


class ScenarioException(TownSimulationException):
    """
    Raised when a scenario file cannot be parsed or fails validation.

    Parameters
    ----------
    key_path : str
        Dotted path of the offending key, e.g. "shops.Fried Chicken Shop.menu".
    message : str
        What is wrong with the value at that key.
    """

    def __init__(self, key_path: str, message: str):
        self.key_path = key_path
        self.message = message
        super().__init__(f"{key_path}: {message}" if key_path else message)


class UnknownLocationException(TownSimulationException):
    """
    Raised when a location name is not part of the town map.
    """

    def __init__(self, name: str):
        self.name = name
        super().__init__(f"Unknown location: {name}")


class PricingException(TownSimulationException):
    """
    Raised when a price or discount rate is out of range.
    """

    pass


class PurchaseException(TownSimulationException):
    """
    Raised when a purchase cannot be executed.

    Parameters
    ----------
    reason : str
        Either "insufficient_funds" or "shop_closed".
    message : str
        Human readable description.
    """

    def __init__(self, reason: str, message: str):
        self.reason = reason
        super().__init__(message)


class BackendConfigurationException(TownSimulationException):
    """
    Raised when the remote decision backend is missing required configuration.
    """

    def __init__(self, variable: str):
        self.variable = variable
        super().__init__(
            f"Remote backend is not configured: environment variable {variable} is not set"
        )


class BackendRequestException(TownSimulationException):
    """
    Raised when a single request to the remote decision backend fails at the
    transport level.
    """

    pass


class BackendUnavailableException(TownSimulationException):
    """
    Raised when the decision backend is permanently unavailable. The simulator
    attaches the partial result so the caller can flush the log collected so far.
    """

    def __init__(self, message: str, partial_result: Optional[Any] = None):
        self.partial_result = partial_result
        super().__init__(message)


class InvariantBreachException(TownSimulationException):
    """
    Raised when an internal invariant of the simulation no longer holds.

    Parameters
    ----------
    message : str
        Description of the breach.
    recent_events : List[Any]
        The last events written before the breach, for diagnostics.
    """

    def __init__(self, message: str, recent_events: Optional[List[Any]] = None):
        self.recent_events = list(recent_events or [])
        super().__init__(message)


class LockOrderException(TownSimulationException):
    """
    Raised in audit mode when a guard is acquired out of the documented order.
    """

    pass


class MalformedLogException(TownSimulationException):
    """
    Raised when an event log record cannot be read.
    """

    def __init__(self, line_number: int, message: str):
        self.line_number = line_number
        super().__init__(f"Line {line_number}: {message}")


class ReportMismatchException(TownSimulationException):
    """
    Raised when two sets of reports cannot be compared.
    """

    pass
