from typing import Callable, Dict

from ..models import RunConfig
from ..storage.run_storage import RunStorage
from .compare import cmd_compare
from .convergence import cmd_convergence
from .critical import cmd_critical
from .fields import cmd_fields
from .law import cmd_law
from .simulate import cmd_simulate

Command = Callable[[RunConfig, RunStorage, int], int]

COMMANDS: Dict[str, Command] = {
    "fields": cmd_fields,
    "simulate": cmd_simulate,
    "law": cmd_law,
    "compare": cmd_compare,
    "critical": cmd_critical,
    "convergence": cmd_convergence,
}
