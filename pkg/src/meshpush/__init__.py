"""Non-intersecting mesh deformation by pushing faces along a shared direction."""
from importlib.metadata import PackageNotFoundError, version as _version

from .errors import MeshPushError
from .mesh import Mesh, make_icosphere, read_obj, write_obj
from .pushing import DeformStep, PushConfig, deform, deform_backward, push_step, push_step_backward

try:
    __version__ = _version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

__all__ = [
    "DeformStep",
    "Mesh",
    "MeshPushError",
    "PushConfig",
    "deform",
    "deform_backward",
    "make_icosphere",
    "push_step",
    "push_step_backward",
    "read_obj",
    "write_obj",
]
