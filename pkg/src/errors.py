"""Exception hierarchy shared by every package; each error knows its CLI exit code."""

from enum import IntEnum


class ExitCode(IntEnum):
    OK = 0
    CONFIG_ERROR = 2
    CAPABILITY_ERROR = 3
    DIVERGENCE = 4
    DATA_ERROR = 5


class VkgError(Exception):
    """Base class; `exit_code` is what the CLI returns when this escapes a command."""

    exit_code: ExitCode = ExitCode.DATA_ERROR


class ConfigError(VkgError):
    exit_code = ExitCode.CONFIG_ERROR


class InfeasibleConfigError(ConfigError):
    """The synthetic generator cannot satisfy the requested counts."""


class DataFormatError(VkgError):
    exit_code = ExitCode.DATA_ERROR

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(f"{where}{message}")


class DimensionError(VkgError, ValueError):
    exit_code = ExitCode.DATA_ERROR


class UnknownIdError(VkgError, IndexError):
    exit_code = ExitCode.DATA_ERROR

    def __init__(self, kind: str, value: int, size: int):
        self.kind = kind
        self.value = value
        super().__init__(f"unknown {kind} id {value} (table holds {size})")


class CapabilityError(VkgError):
    exit_code = ExitCode.CAPABILITY_ERROR

    def __init__(self, method: str, task: str):
        self.method = method
        self.task = task
        super().__init__(f"method '{method}' cannot perform task '{task}'")


class DivergenceError(VkgError):
    exit_code = ExitCode.DIVERGENCE


class CheckpointError(VkgError):
    exit_code = ExitCode.DATA_ERROR


def check_dims(name: str, actual: int, expected: int) -> None:
    if actual != expected:
        raise DimensionError(f"{name}: expected dimension {expected}, got {actual}")
