"""Which method can perform which task."""

from src.errors import CapabilityError, ConfigError
from src.evaluation.ranking import Task

KGE_METHODS = ("transe", "transh", "transr")
TWO_STAGE_METHODS = ("clip+transe", "clip+transh", "clip+transr")
FUSION_METHODS = ("transe+embed", "transh+embed", "transr+embed")
METHODS = (
    *KGE_METHODS,
    "clip",
    *TWO_STAGE_METHODS,
    *FUSION_METHODS,
    "tag-encoder",
    "stagewise",
    "ours",
)

_TRT = frozenset({Task.TRT_HEAD, Task.TRT_TAIL})
_ALL = frozenset(Task)

CAPABILITIES: dict[str, frozenset[Task]] = {
    **{method: _TRT for method in KGE_METHODS},
    "clip": frozenset({Task.VT, Task.TV}),
    **{method: _ALL for method in TWO_STAGE_METHODS},
    **{method: _TRT for method in FUSION_METHODS},
    "tag-encoder": _TRT,
    "stagewise": _ALL,
    "ours": _ALL,
}


def parse_method(name: str) -> str:
    method = name.strip().lower()
    if method not in CAPABILITIES:
        raise ConfigError(f"unknown method '{name}' (expected one of {', '.join(METHODS)})")
    return method


def supports(method: str, task: Task) -> bool:
    return task in CAPABILITIES[parse_method(method)]


def check_capability(method: str, task: Task) -> None:
    if not supports(method, task):
        raise CapabilityError(method, task.value)


def supported_tasks(method: str, tasks: list[Task] | None = None) -> list[Task]:
    """`tasks` (all tasks by default) restricted to what `method` can do, order kept."""
    capable = CAPABILITIES[parse_method(method)]
    return [task for task in (tasks if tasks is not None else list(Task)) if task in capable]


def kge_variant(method: str) -> str:
    """KGE score function behind a KGE, two-stage or fusion method name."""
    method = parse_method(method)
    for variant in KGE_METHODS:
        if variant in method:
            return variant
    raise ConfigError(f"method '{method}' has no KGE component")
