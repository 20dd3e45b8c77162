"""Reference SUT adapter: serve any pose-error model to an examiner over stdio.

Wrap a model with :func:`wrap_model_stub` (or hand-roll a callback mapping a
batch of poses to 2D/3D error lists) and pass it to :func:`serve_stdio`. The
bundled :class:`MirrorLandscape` exists to test the wire protocol against the
examiner's in-process landscapes. Standard library only, by design.
"""

from .landscape import MirrorLandscape, load_landscape
from .model import wrap_model_stub
from .server import ProtocolServer, serve_stdio

__version__ = "0.1.0"

__all__ = [
    "MirrorLandscape",
    "ProtocolServer",
    "load_landscape",
    "serve_stdio",
    "wrap_model_stub",
]
