"""tinylift: a contactless-elevator tinyML stack runnable on recorded data.

Layers: ``dsp`` (audio features), ``vision`` (image features), ``engine``
(int8 CNN inference + arena), ``controller`` (floor-unit state machine),
``sim`` (deterministic scenario runner), ``cli`` (command line).
"""

__version__ = "0.1.0"

from . import controller, dsp, engine, sim, vision, wav  # noqa: F401
