from . import ops
from .backends import available_backends, backend_name, get_backend, kernels
from .tape import Parameter, Tape, Var

__all__ = [
    "Parameter",
    "Tape",
    "Var",
    "ops",
    "kernels",
    "backend_name",
    "get_backend",
    "available_backends",
]
